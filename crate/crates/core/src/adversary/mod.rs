//! Adversaries: the oblivious baseline, the white-box attack query, and an
//! adaptive game loop that plays any strategy against any index.

pub mod attack;
pub mod game;
pub mod oblivious;

pub use attack::{
    attack_size_ok, build_attack_dataset, craft_attack_query, craft_query_against, verify_attack, AttackInstance,
    AttackReport, Certificate, XMode,
};
pub use game::{
    adaptive_loop, AdversaryTranscript, ObliviousTarget, QueryTarget, RobustTarget, Round, Strategy, TargetAnswer,
};
pub use oblivious::{build_oblivious, query_oblivious, ObliviousAnswer, ObliviousIndex, Ranking};
