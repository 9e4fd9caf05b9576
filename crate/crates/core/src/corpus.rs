//! Published workflows bundled as golden inputs.

pub const GSM8K: &str = include_str!("../../../corpus/gsm8k_round16.mmd");
pub const MATH: &str = include_str!("../../../corpus/math_round16.mmd");
pub const HUMANEVAL: &str = include_str!("../../../corpus/humaneval_round5.mmd");
pub const MBPP: &str = include_str!("../../../corpus/mbpp_round8.mmd");
/// Single-solver seed used by the evolution demo.
pub const BASELINE_MATH: &str = include_str!("../../../corpus/baseline_math.mmd");

/// The four case-study workflows by name.
pub const CASE_STUDIES: [(&str, &str); 4] = [("gsm8k", GSM8K), ("math", MATH), ("humaneval", HUMANEVAL), ("mbpp", MBPP)];

pub fn by_name(name: &str) -> Option<&'static str> {
    match name {
        "baseline_math" => Some(BASELINE_MATH),
        _ => CASE_STUDIES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t),
    }
}
