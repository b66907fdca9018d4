//! Classification of sequence positions into system-prompt, vision and
//! user-text tokens.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenGroup {
    System,
    Vision,
    Text,
}

/// Disjoint index sets over `[0, seq_len)`. Positions in no set are allowed
/// (e.g. chat-template separators) and count towards no group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPartition")]
pub struct TokenPartition {
    seq_len: usize,
    system: Vec<usize>,
    vision: Vec<usize>,
    text: Vec<usize>,
}

#[derive(Deserialize)]
struct RawPartition {
    seq_len: usize,
    #[serde(default)]
    system: Vec<usize>,
    vision: Vec<usize>,
    text: Vec<usize>,
}

impl TryFrom<RawPartition> for TokenPartition {
    type Error = Error;
    fn try_from(raw: RawPartition) -> Result<Self> {
        TokenPartition::new(raw.seq_len, raw.system, raw.vision, raw.text)
    }
}

impl TokenPartition {
    pub fn new(
        seq_len: usize,
        mut system: Vec<usize>,
        mut vision: Vec<usize>,
        mut text: Vec<usize>,
    ) -> Result<Self> {
        let mut owner: Vec<Option<TokenGroup>> = vec![None; seq_len];
        for (group, set) in [
            (TokenGroup::System, &mut system),
            (TokenGroup::Vision, &mut vision),
            (TokenGroup::Text, &mut text),
        ] {
            set.sort_unstable();
            for &i in set.iter() {
                let slot = owner.get_mut(i).ok_or_else(|| {
                    Error::InvalidPartition(format!(
                        "{group:?} index {i} outside sequence of length {seq_len}"
                    ))
                })?;
                if let Some(prev) = slot {
                    return Err(Error::InvalidPartition(format!(
                        "index {i} assigned to both {prev:?} and {group:?}"
                    )));
                }
                *slot = Some(group);
            }
        }
        Ok(Self {
            seq_len,
            system,
            vision,
            text,
        })
    }

    /// `[system | vision | text]` laid out back to back.
    pub fn contiguous(n_system: usize, n_vision: usize, n_text: usize) -> Self {
        let v0 = n_system;
        let t0 = n_system + n_vision;
        Self {
            seq_len: t0 + n_text,
            system: (0..v0).collect(),
            vision: (v0..t0).collect(),
            text: (t0..t0 + n_text).collect(),
        }
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn system(&self) -> &[usize] {
        &self.system
    }

    pub fn vision(&self) -> &[usize] {
        &self.vision
    }

    pub fn text(&self) -> &[usize] {
        &self.text
    }

    pub fn indices(&self, group: TokenGroup) -> &[usize] {
        match group {
            TokenGroup::System => &self.system,
            TokenGroup::Vision => &self.vision,
            TokenGroup::Text => &self.text,
        }
    }

    pub fn group_of(&self, i: usize) -> Option<TokenGroup> {
        [TokenGroup::System, TokenGroup::Vision, TokenGroup::Text]
            .into_iter()
            .find(|&g| self.indices(g).binary_search(&i).is_ok())
    }

    /// Indices of `group` strictly below `boundary`.
    pub fn indices_below(&self, group: TokenGroup, boundary: usize) -> &[usize] {
        let set = self.indices(group);
        let end = set.partition_point(|&i| i < boundary);
        &set[..end]
    }

    /// Boolean membership mask for `group` over the first `len` positions.
    pub fn mask(&self, group: TokenGroup, len: usize) -> Vec<bool> {
        let mut m = vec![false; len];
        for &i in self.indices_below(group, len) {
            m[i] = true;
        }
        m
    }

    pub fn require_vision(&self) -> Result<()> {
        if self.vision.is_empty() {
            return Err(Error::InvalidPartition("vision set is empty".into()));
        }
        Ok(())
    }

    pub(crate) fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.seq_len {
            return Err(Error::dims(format!(
                "{what} has length {len}, partition covers {}",
                self.seq_len
            )));
        }
        Ok(())
    }

    /// Sum of `weights` over the indices of `group` that fall inside the slice.
    pub fn mass(&self, group: TokenGroup, weights: &[f64]) -> f64 {
        self.indices_below(group, weights.len())
            .iter()
            .map(|&i| weights[i])
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contiguous_layout() {
        let p = TokenPartition::contiguous(2, 3, 1);
        assert_eq!(p.seq_len(), 6);
        assert_eq!(p.vision(), &[2, 3, 4]);
        assert_eq!(p.group_of(5), Some(TokenGroup::Text));
        assert_eq!(p.indices_below(TokenGroup::Vision, 4), &[2, 3]);
        assert_eq!(p.mass(TokenGroup::Vision, &[0.0, 0.0, 0.5, 0.25, 0.25, 0.0]), 1.0);
    }

    #[test]
    fn overlap_and_range_rejected() {
        let err = TokenPartition::new(4, vec![0], vec![1, 2], vec![2, 3]).unwrap_err();
        assert!(matches!(err, Error::InvalidPartition(_)));
        assert!(TokenPartition::new(4, vec![], vec![1], vec![4]).is_err());
    }

    #[test]
    fn deserialize_validates() {
        let ok: TokenPartition =
            serde_json::from_str(r#"{"seq_len":3,"vision":[1],"text":[2]}"#).unwrap();
        assert_eq!(ok.system(), &[] as &[usize]);
        assert!(serde_json::from_str::<TokenPartition>(
            r#"{"seq_len":3,"system":[0],"vision":[0],"text":[2]}"#
        )
        .is_err());
    }
}
