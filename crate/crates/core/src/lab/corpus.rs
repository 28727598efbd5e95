//! The default verification corpus. The same rules ship as documents in
//! the workspace `corpus/` directory.

use crate::geometry::Coord;
use crate::rules::{builtin, neighborhood_position, LocalRule1D, LocalRule2D, RuleSpec};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub name: &'static str,
    pub file: &'static str,
    pub spec: RuleSpec,
}

fn two(name: &'static str, file: &'static str, rule: LocalRule2D) -> CorpusEntry {
    CorpusEntry {
        name,
        file,
        spec: RuleSpec::TwoD(rule),
    }
}

fn one(name: &'static str, file: &'static str, rule: LocalRule1D) -> CorpusEntry {
    CorpusEntry {
        name,
        file,
        spec: RuleSpec::OneD(rule),
    }
}

/// `x_(1,0) · x_(0,1)` over `q = 2`.
pub fn and_rule() -> LocalRule2D {
    let (a, b) = (
        neighborhood_position(Coord::new(1, 0), 1),
        neighborhood_position(Coord::new(0, 1), 1),
    );
    LocalRule2D::from_fn(2, 1, |w| w[a] & w[b]).expect("valid table")
}

pub fn corpus() -> Vec<CorpusEntry> {
    let additive = |terms: &[(i32, i32)]| {
        LocalRule2D::additive(2, 1, terms.iter().map(|&(i, j)| (Coord::new(i, j), 1)))
            .expect("valid terms")
    };
    let additive_1d =
        |terms: &[(i32, u32)]| LocalRule1D::additive(2, 1, terms).expect("valid terms");
    vec![
        two("identity", "identity.rule.json", additive(&[(0, 0)])),
        two("constant-zero", "constant-zero.rule.json", additive(&[])),
        two("f1", "f1.rule.json", builtin("F1", 1).expect("builtin")),
        two(
            "f1-r2",
            "f1-r2.rule.json",
            builtin("F1", 2).expect("builtin"),
        ),
        two("f12", "f12.rule.json", additive(&[(1, 0), (0, 1)])),
        two("f34", "f34.rule.json", additive(&[(-1, 0), (0, -1)])),
        two(
            "plus",
            "plus.rule.json",
            builtin("PLUS", 1).expect("builtin"),
        ),
        two("and", "and.rule.json", and_rule()),
        one(
            "xor-1d",
            "xor-1d.rule.json",
            additive_1d(&[(-1, 1), (1, 1)]),
        ),
        one("shift-1d", "shift-1d.rule.json", additive_1d(&[(1, 1)])),
        one(
            "identity-1d",
            "identity-1d.rule.json",
            additive_1d(&[(0, 1)]),
        ),
    ]
}

pub fn entry(name: &str) -> Option<CorpusEntry> {
    corpus().into_iter().find(|e| e.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::parse_rule;
    use std::path::PathBuf;

    #[test]
    fn files_match_the_builtin_corpus() {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
        for e in corpus() {
            let text = std::fs::read_to_string(dir.join(e.file)).unwrap();
            assert_eq!(parse_rule(&text).unwrap(), e.spec, "{}", e.name);
        }
    }
}
