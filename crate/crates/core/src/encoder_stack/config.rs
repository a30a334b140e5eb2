use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One dilated-attention branch: segment length and dilation rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branch {
    pub segment: usize,
    pub dilation: usize,
}

impl Branch {
    pub const fn new(segment: usize, dilation: usize) -> Self {
        Branch { segment, dilation }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dilation == 0 || self.segment < self.dilation {
            return Err(Error::config(
                "encoder.branches",
                format!("branch (w={}, r={}) needs w >= r >= 1", self.segment, self.dilation),
            ));
        }
        if !self.segment.is_multiple_of(self.dilation) {
            return Err(Error::config(
                "encoder.branches",
                format!("segment length {} is not divisible by dilation {}", self.segment, self.dilation),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Positional {
    #[default]
    None,
    /// Learned row and column embeddings indexed by the patch grid position.
    Grid,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectorKind {
    #[default]
    Linear,
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Width of the frozen patch features.
    pub patch_dim: usize,
    pub slide_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn_mult: usize,
    pub branches: Vec<Branch>,
    pub positional: Positional,
    /// Largest grid row/column index supported by the grid embedding.
    pub max_grid: usize,
    pub bypass_slide_encoder: bool,
    pub projector: ProjectorKind,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            patch_dim: 64,
            slide_dim: 128,
            heads: 4,
            layers: 2,
            ffn_mult: 2,
            branches: vec![Branch::new(16, 1), Branch::new(32, 2), Branch::new(64, 4)],
            positional: Positional::None,
            max_grid: 64,
            bypass_slide_encoder: false,
            projector: ProjectorKind::Linear,
        }
    }
}

impl EncoderConfig {
    pub fn head_dim(&self) -> usize {
        self.slide_dim / self.heads.max(1)
    }

    /// Width of the features entering the projector.
    pub fn projector_in(&self) -> usize {
        if self.bypass_slide_encoder {
            self.patch_dim
        } else {
            self.slide_dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_dim == 0 {
            return Err(Error::config("encoder.patch_dim", "must be positive"));
        }
        if self.bypass_slide_encoder {
            return Ok(());
        }
        if self.heads == 0 || self.slide_dim == 0 || !self.slide_dim.is_multiple_of(self.heads) {
            return Err(Error::config(
                "encoder.heads",
                format!("heads ({}) must divide slide_dim ({})", self.heads, self.slide_dim),
            ));
        }
        if self.ffn_mult == 0 {
            return Err(Error::config("encoder.ffn_mult", "must be positive"));
        }
        if self.branches.is_empty() {
            return Err(Error::config("encoder.branches", "at least one branch is required"));
        }
        for b in &self.branches {
            b.validate()?;
        }
        if self.positional == Positional::Grid && self.max_grid == 0 {
            return Err(Error::config("encoder.max_grid", "must be positive with grid positions"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_rules() {
        assert!(Branch::new(4, 2).validate().is_ok());
        assert!(Branch::new(6, 4).validate().is_err());
        assert!(Branch::new(2, 4).validate().is_err());
        assert!(Branch::new(3, 0).validate().is_err());
        assert!(EncoderConfig::default().validate().is_ok());
        let bad = EncoderConfig { heads: 3, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Config { .. })));
    }
}
