//! Synthetic draft/target oracle pairs with a controllable agreement rate.
//!
//! Both oracles derive their distributions from a hash of the trailing
//! context window, so they are deterministic, stationary and cheap, yet look
//! like language-model output: one dominant token whose probability varies
//! by context, with geometrically decaying mass over the rest.
//!
//! The draft is a mixture of the target and an independent noise model,
//! weighted by `agreement` over contexts: a context-keyed coin below
//! `agreement` makes the draft reproduce the target's distribution exactly,
//! anything above makes it emit the noise distribution instead. Raising
//! `agreement` only ever converts noise contexts into agreeing ones, so the
//! draft's total-variation distance from the target is non-increasing in
//! `agreement`, reaching pointwise equality at 1 and pure noise at 0. Tying
//! disagreement to whole contexts rather than blending vectors keeps the
//! draft honest: its path scores track the real chance that a drafted branch
//! survives verification, which is what expectation-driven tree building
//! assumes.

use super::{Oracle, OracleError};
use crate::attention::{FlatTree, TreeMask};
use crate::tree::TokenId;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

const TARGET_SALT: u64 = 0x7461_7267_6574_5f31;
const NOISE_SALT: u64 = 0x6e6f_6973_655f_5f31;
const AGREE_SALT: u64 = 0x6167_7265_655f_5f31;

/// Parameters shared by both halves of a [`SyntheticPair`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPairConfig {
    pub vocab_size: usize,
    /// How many trailing tokens determine a context.
    pub context_window: usize,
    pub seed: u64,
    /// Fraction of contexts on which the draft reproduces the target.
    pub agreement: f64,
    /// Range of the target's top-token probability, drawn per context.
    pub target_peak: (f64, f64),
    /// Range of the noise model's top-token probability.
    pub noise_peak: (f64, f64),
    /// Geometric decay across the target's non-top ranks.
    pub target_decay: f64,
    /// Geometric decay across the noise model's non-top ranks.
    pub noise_decay: f64,
}

impl Default for SyntheticPairConfig {
    fn default() -> Self {
        SyntheticPairConfig {
            vocab_size: 48,
            context_window: 4,
            seed: 0,
            agreement: 1.0,
            target_peak: (0.95, 0.995),
            noise_peak: (0.05, 0.2),
            target_decay: 0.35,
            noise_decay: 0.8,
        }
    }
}

/// A draft/target oracle pair sharing one configuration.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    cfg: Arc<SyntheticPairConfig>,
}

impl SyntheticPair {
    pub fn new(cfg: SyntheticPairConfig) -> Result<Self, OracleError> {
        if cfg.vocab_size < 2 {
            return Err(OracleError::InvalidConfig(
                "vocabulary needs at least two tokens".into(),
            ));
        }
        if cfg.context_window == 0 {
            return Err(OracleError::InvalidConfig(
                "context window must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&cfg.agreement) || cfg.agreement.is_nan() {
            return Err(OracleError::InvalidConfig(format!(
                "agreement {} is outside [0, 1]",
                cfg.agreement
            )));
        }
        for (label, (lo, hi)) in [
            ("target_peak", cfg.target_peak),
            ("noise_peak", cfg.noise_peak),
        ] {
            if !(0.0 < lo && lo <= hi && hi < 1.0) {
                return Err(OracleError::InvalidConfig(format!(
                    "{label} range ({lo}, {hi}) must satisfy 0 < lo <= hi < 1"
                )));
            }
        }
        for (label, decay) in [
            ("target_decay", cfg.target_decay),
            ("noise_decay", cfg.noise_decay),
        ] {
            if !(0.0 < decay && decay < 1.0) {
                return Err(OracleError::InvalidConfig(format!(
                    "{label} {decay} must lie strictly between 0 and 1"
                )));
            }
        }
        Ok(SyntheticPair { cfg: Arc::new(cfg) })
    }

    pub fn config(&self) -> &SyntheticPairConfig {
        &self.cfg
    }

    pub fn target(&self) -> SyntheticOracle {
        SyntheticOracle {
            cfg: Arc::clone(&self.cfg),
            role: Role::Target,
        }
    }

    pub fn draft(&self) -> SyntheticOracle {
        SyntheticOracle {
            cfg: Arc::clone(&self.cfg),
            role: Role::Draft,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Target,
    Draft,
}

/// One half of a [`SyntheticPair`].
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    cfg: Arc<SyntheticPairConfig>,
    role: Role,
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in [0, 1) from the top 53 bits.
fn hash01(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl SyntheticOracle {
    /// Stable hash of the trailing context window under a role salt.
    fn context_hash(&self, salt: u64, window: &[TokenId]) -> u64 {
        let start = window.len().saturating_sub(self.cfg.context_window);
        let mut h = splitmix64(self.cfg.seed ^ salt);
        for &t in &window[start..] {
            h = splitmix64(h ^ (u64::from(t.0) + 1));
        }
        h
    }

    /// One dominant token plus a geometric tail, both chosen by `h`.
    fn peaked_distribution(&self, h: u64, peak: (f64, f64), decay: f64) -> Vec<f64> {
        let v = self.cfg.vocab_size;
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let top = peak.0 + (peak.1 - peak.0) * rng.random::<f64>();
        let mut ranking: Vec<usize> = (0..v).collect();
        ranking.shuffle(&mut rng);
        let mut dist = vec![0.0; v];
        dist[ranking[0]] = top;
        // finite geometric series scaled to carry exactly the leftover mass
        let mut weight = (1.0 - top) * (1.0 - decay) / (1.0 - decay.powi(v as i32 - 1));
        for &t in &ranking[1..] {
            dist[t] = weight;
            weight *= decay;
        }
        dist
    }

    fn target_distribution(&self, prefix: &[TokenId]) -> Vec<f64> {
        let h = self.context_hash(TARGET_SALT, prefix);
        self.peaked_distribution(h, self.cfg.target_peak, self.cfg.target_decay)
    }

    fn noise_distribution(&self, prefix: &[TokenId]) -> Vec<f64> {
        let h = self.context_hash(NOISE_SALT, prefix);
        self.peaked_distribution(h, self.cfg.noise_peak, self.cfg.noise_decay)
    }

    fn distribution(&self, prefix: &[TokenId]) -> Vec<f64> {
        match self.role {
            Role::Target => self.target_distribution(prefix),
            Role::Draft => {
                let coin = hash01(self.context_hash(AGREE_SALT, prefix));
                if coin < self.cfg.agreement {
                    self.target_distribution(prefix)
                } else {
                    self.noise_distribution(prefix)
                }
            }
        }
    }
}

impl Oracle for SyntheticOracle {
    fn vocab_size(&self) -> usize {
        self.cfg.vocab_size
    }

    fn next_distribution(&self, prefix: &[TokenId]) -> Result<Vec<f64>, OracleError> {
        if prefix.is_empty() {
            return Err(OracleError::EmptyPrefix);
        }
        Ok(self.distribution(prefix))
    }

    fn batch_tree_forward(
        &self,
        context: &[TokenId],
        flat: &FlatTree,
        _mask: &TreeMask,
    ) -> Result<Vec<Vec<f64>>, OracleError> {
        // Only the trailing window matters; slide it down the tree.
        let windows = super::tree_windows(context, flat, self.cfg.context_window);
        Ok(windows.iter().map(|w| self.distribution(w)).collect())
    }
}
