use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Operator clicks: positives inside the suspected anomaly, negatives outside.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub positives: Vec<(usize, usize)>,
    #[serde(default)]
    pub negatives: Vec<(usize, usize)>,
}

impl PromptSet {
    pub fn new(positives: Vec<(usize, usize)>, negatives: Vec<(usize, usize)>) -> Self {
        PromptSet {
            positives,
            negatives,
        }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::invalid("at least one positive prompt is required"));
        }
        for &(x, y) in self.positives.iter().chain(&self.negatives) {
            if x >= width || y >= height {
                return Err(Error::invalid(format!(
                    "prompt ({x}, {y}) outside {width}x{height} frame"
                )));
            }
        }
        Ok(())
    }
}

/// `pos:x,y;x,y;neg:x,y`: a `pos:`/`neg:` tag switches the list that the
/// following points go to; untagged leading points are positive.
impl FromStr for PromptSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut set = PromptSet::default();
        let mut negative = false;
        for token in s.split(';').map(str::trim).filter(|t| !t.is_empty()) {
            let point = if let Some(rest) = token.strip_prefix("pos:") {
                negative = false;
                rest
            } else if let Some(rest) = token.strip_prefix("neg:") {
                negative = true;
                rest
            } else {
                token
            };
            let (x, y) = point
                .split_once(',')
                .ok_or_else(|| Error::parse("prompts", format!("expected x,y in {token:?}")))?;
            let coord = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::parse("prompts", format!("bad coordinate in {token:?}")))
            };
            let p = (coord(x)?, coord(y)?);
            if negative {
                set.negatives.push(p);
            } else {
                set.positives.push(p);
            }
        }
        Ok(set)
    }
}

impl std::fmt::Display for PromptSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let join = |v: &[(usize, usize)]| {
            v.iter()
                .map(|(x, y)| format!("{x},{y}"))
                .collect::<Vec<_>>()
                .join(";")
        };
        write!(f, "pos:{}", join(&self.positives))?;
        if !self.negatives.is_empty() {
            write!(f, ";neg:{}", join(&self.negatives))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tagged_lists() {
        let p: PromptSet = "pos:1,2;3,4;neg:5,6".parse().unwrap();
        assert_eq!(p.positives, vec![(1, 2), (3, 4)]);
        assert_eq!(p.negatives, vec![(5, 6)]);
        assert_eq!(p.to_string().parse::<PromptSet>().unwrap(), p);
        let bare: PromptSet = "7,8".parse().unwrap();
        assert_eq!(bare.positives, vec![(7, 8)]);
        assert!("pos:1".parse::<PromptSet>().is_err());
        assert!("pos:a,2".parse::<PromptSet>().is_err());
    }

    #[test]
    fn validation() {
        let p = PromptSet::new(vec![(1, 1)], vec![(9, 0)]);
        assert!(p.validate(10, 10).is_ok());
        assert!(p.validate(9, 10).is_err());
        assert!(PromptSet::default().validate(10, 10).is_err());
    }
}
