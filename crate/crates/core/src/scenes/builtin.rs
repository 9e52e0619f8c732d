//! The seven bundled benchmark scenes.

use super::Scene;

pub const BUILTIN_COUNT: usize = 7;

const SOURCES: [&str; BUILTIN_COUNT] = [
    include_str!("../../scenes/problem1.toml"),
    include_str!("../../scenes/problem2.toml"),
    include_str!("../../scenes/problem3.toml"),
    include_str!("../../scenes/problem4.toml"),
    include_str!("../../scenes/problem5.toml"),
    include_str!("../../scenes/problem6.toml"),
    include_str!("../../scenes/problem7.toml"),
];

/// TOML text of bundled problem `k` (1-based).
pub fn builtin_source(k: usize) -> Option<&'static str> {
    k.checked_sub(1).and_then(|i| SOURCES.get(i)).copied()
}

/// Bundled problem `k` (1-based). Panics on an out-of-range index.
pub fn builtin_problem(k: usize) -> Scene {
    let src = builtin_source(k).unwrap_or_else(|| panic!("no bundled problem {k}"));
    Scene::from_toml_str(src).unwrap_or_else(|e| panic!("bundled problem {k} is invalid: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenes_round_trip() {
        for k in 1..=BUILTIN_COUNT {
            let s = builtin_problem(k);
            assert!(s.warnings.is_empty(), "problem {k}: {:?}", s.warnings);
            let again = Scene::from_toml_str(&s.to_toml_string()).unwrap();
            assert_eq!(s, again, "problem {k}");
        }
        assert!(builtin_source(0).is_none());
        assert!(builtin_source(BUILTIN_COUNT + 1).is_none());
    }
}
