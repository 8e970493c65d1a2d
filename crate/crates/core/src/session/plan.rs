use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ImageRef, ImageRole, SessionError};

pub const FAMILIAR_POOL: usize = 12;
pub const NOVEL_POOL: usize = 24;
pub const PAIRS_PER_KIND: usize = 6;
pub const DEFAULT_PROMPT: &str = "What is shown in the picture?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    BothNew,
    KnownRight,
    KnownLeft,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamiliarizationEntry {
    pub image: ImageRef,
    pub prompt: String,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairSpec {
    pub id: String,
    pub kind: PairKind,
    pub left_image: ImageRef,
    pub right_image: ImageRef,
    pub duration_ms: u64,
    /// Blank screen shown before the pair.
    pub lead_blank_ms: u64,
}

impl PairSpec {
    fn roles_match(&self) -> bool {
        let (l, r) = (self.left_image.role, self.right_image.role);
        match self.kind {
            PairKind::BothNew => l == ImageRole::Novel && r == ImageRole::Novel,
            PairKind::KnownRight => l == ImageRole::Novel && r == ImageRole::Familiar,
            PairKind::KnownLeft => l == ImageRole::Familiar && r == ImageRole::Novel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub familiarization: Vec<FamiliarizationEntry>,
    pub test_pairs: Vec<PairSpec>,
    pub shuffle_seed: u64,
}

/// Stimulus durations used by [`build_plan_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanTiming {
    pub familiarization_ms: u64,
    pub pair_ms: u64,
    /// Whole test phase; what the pairs leave over is spread as blanks.
    pub test_total_ms: u64,
}

impl Default for PlanTiming {
    fn default() -> Self {
        Self { familiarization_ms: 15_000, pair_ms: 13_000, test_total_ms: 240_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Familiarization,
    Blank,
    Pair,
}

/// One stretch of the schedule on the stimulus clock, which stops while the
/// session is on hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleItem {
    pub kind: ItemKind,
    /// Index into `familiarization` or `test_pairs`.
    pub index: usize,
    pub start_ms: u64,
    pub end_ms: u64,
}

/// [`build_plan_with`] at the protocol's standard timing.
pub fn build_plan(familiar_pool: &[ImageRef], novel_pool: &[ImageRef], seed: u64) -> Result<SessionPlan, SessionError> {
    build_plan_with(familiar_pool, novel_pool, seed, &PlanTiming::default())
}

/// Builds the 12-image familiarization phase and the 18 test pairs.
///
/// Pair contents are fixed by pool order: the first twelve novel images form
/// the six both-new pairs; familiar images 0-5 sit on the right opposite
/// novel images 12-17, familiar images 6-11 on the left opposite novel
/// images 18-23. The seed only shuffles presentation order, so every seed
/// yields the same set of pairs.
pub fn build_plan_with(
    familiar_pool: &[ImageRef],
    novel_pool: &[ImageRef],
    seed: u64,
    timing: &PlanTiming,
) -> Result<SessionPlan, SessionError> {
    if familiar_pool.len() != FAMILIAR_POOL || novel_pool.len() != NOVEL_POOL {
        return Err(SessionError::PoolSizeMismatch { familiar: familiar_pool.len(), novel: novel_pool.len() });
    }
    let mut ids = BTreeSet::new();
    for img in familiar_pool.iter().chain(novel_pool) {
        if !ids.insert(img.id.as_str()) {
            return Err(SessionError::DuplicateId(img.id.clone()));
        }
    }
    let n_pairs = 3 * PAIRS_PER_KIND;
    let blank_total = timing
        .test_total_ms
        .checked_sub(n_pairs as u64 * timing.pair_ms)
        .ok_or_else(|| SessionError::InvalidPlan("pairs do not fit the test phase".to_string()))?;

    let familiar: Vec<ImageRef> = familiar_pool.iter().map(|i| ImageRef { role: ImageRole::Familiar, ..i.clone() }).collect();
    let novel: Vec<ImageRef> = novel_pool.iter().map(|i| ImageRef { role: ImageRole::Novel, ..i.clone() }).collect();

    let mut pairs = Vec::with_capacity(n_pairs);
    let mut push = |kind, left: &ImageRef, right: &ImageRef| {
        let id = format!("pair-{:02}", pairs.len() + 1);
        pairs.push(PairSpec {
            id,
            kind,
            left_image: left.clone(),
            right_image: right.clone(),
            duration_ms: timing.pair_ms,
            lead_blank_ms: 0,
        });
    };
    for k in 0..PAIRS_PER_KIND {
        push(PairKind::BothNew, &novel[2 * k], &novel[2 * k + 1]);
    }
    for k in 0..PAIRS_PER_KIND {
        push(PairKind::KnownRight, &novel[12 + k], &familiar[k]);
    }
    for k in 0..PAIRS_PER_KIND {
        push(PairKind::KnownLeft, &familiar[6 + k], &novel[18 + k]);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut familiarization: Vec<FamiliarizationEntry> = familiar
        .into_iter()
        .map(|image| FamiliarizationEntry { image, prompt: DEFAULT_PROMPT.to_string(), duration_ms: timing.familiarization_ms })
        .collect();
    familiarization.shuffle(&mut rng);
    pairs.shuffle(&mut rng);
    for (i, p) in pairs.iter_mut().enumerate() {
        p.lead_blank_ms = spread(blank_total, n_pairs, i);
    }
    Ok(SessionPlan { familiarization, test_pairs: pairs, shuffle_seed: seed })
}

// Share `i` of `total` split as evenly as possible into `n` integer parts.
fn spread(total: u64, n: usize, i: usize) -> u64 {
    let n = n as u64;
    let i = i as u64;
    (i + 1) * total / n - i * total / n
}

impl SessionPlan {
    pub fn familiarization_ms(&self) -> u64 {
        self.familiarization.iter().map(|e| e.duration_ms).sum()
    }

    pub fn test_ms(&self) -> u64 {
        self.test_pairs.iter().map(|p| p.lead_blank_ms + p.duration_ms).sum()
    }

    pub fn total_ms(&self) -> u64 {
        self.familiarization_ms() + self.test_ms()
    }

    pub fn kind_counts(&self) -> (usize, usize, usize) {
        let count = |k| self.test_pairs.iter().filter(|p| p.kind == k).count();
        (count(PairKind::BothNew), count(PairKind::KnownRight), count(PairKind::KnownLeft))
    }

    pub fn pair(&self, id: &str) -> Option<&PairSpec> {
        self.test_pairs.iter().find(|p| p.id == id)
    }

    /// Hex SHA-256 of the plan's canonical JSON.
    pub fn hash(&self) -> String {
        let bytes = crate::wire::canonical_json(self).expect("plans always serialize");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The schedule on the stimulus clock: familiarization images back to
    /// back, then each pair preceded by its blank.
    pub fn schedule(&self) -> Vec<ScheduleItem> {
        let mut items = Vec::new();
        let mut t = 0;
        let mut add = |kind, index, len: u64| {
            if len > 0 {
                items.push(ScheduleItem { kind, index, start_ms: t, end_ms: t + len });
                t += len;
            }
        };
        for (i, e) in self.familiarization.iter().enumerate() {
            add(ItemKind::Familiarization, i, e.duration_ms);
        }
        for (i, p) in self.test_pairs.iter().enumerate() {
            add(ItemKind::Blank, i, p.lead_blank_ms);
            add(ItemKind::Pair, i, p.duration_ms);
        }
        items
    }

    /// Checks that hold for any plan the engine can run: unique ids within
    /// each phase, roles matching pair kinds, positive durations, and no
    /// novel image in familiarization.
    pub fn validate_structure(&self) -> Result<(), SessionError> {
        let invalid = |m: &str| Err(SessionError::InvalidPlan(m.to_string()));
        let mut pair_ids = BTreeSet::new();
        for p in &self.test_pairs {
            if !pair_ids.insert(p.id.as_str()) {
                return Err(SessionError::DuplicateId(p.id.clone()));
            }
            if !p.roles_match() {
                return invalid("pair images do not match the pair kind");
            }
            if p.duration_ms == 0 {
                return invalid("pair duration must be positive");
            }
        }
        let mut fam_ids = BTreeSet::new();
        for e in &self.familiarization {
            if e.image.role != ImageRole::Familiar {
                return invalid("novel image in familiarization");
            }
            if !fam_ids.insert(e.image.id.as_str()) {
                return Err(SessionError::DuplicateId(e.image.id.clone()));
            }
            if e.duration_ms == 0 {
                return invalid("familiarization duration must be positive");
            }
        }
        let novel_in_fam = self
            .test_pairs
            .iter()
            .flat_map(|p| [&p.left_image, &p.right_image])
            .any(|i| i.role == ImageRole::Novel && fam_ids.contains(i.id.as_str()));
        if novel_in_fam {
            return invalid("novel image in familiarization");
        }
        Ok(())
    }

    /// Full protocol check: 12 x 15 s familiarization, 18 pairs split 6/6/6
    /// filling 240 s, every familiar image reused once, six on each side.
    pub fn validate_protocol(&self) -> Result<(), SessionError> {
        self.validate_structure()?;
        let invalid = |m: &str| Err(SessionError::InvalidPlan(m.to_string()));
        let timing = PlanTiming::default();
        if self.familiarization.len() != FAMILIAR_POOL
            || self.familiarization.iter().any(|e| e.duration_ms != timing.familiarization_ms)
        {
            return invalid("familiarization must be 12 images of 15 s");
        }
        if self.kind_counts() != (PAIRS_PER_KIND, PAIRS_PER_KIND, PAIRS_PER_KIND) {
            return invalid("pair kinds must be split 6/6/6");
        }
        if self.test_ms() != timing.test_total_ms {
            return invalid("test phase must total 240 s");
        }
        let mut reused: Vec<&str> = self
            .test_pairs
            .iter()
            .flat_map(|p| [&p.left_image, &p.right_image])
            .filter(|i| i.role == ImageRole::Familiar)
            .map(|i| i.id.as_str())
            .collect();
        reused.sort_unstable();
        let mut shown: Vec<&str> = self.familiarization.iter().map(|e| e.image.id.as_str()).collect();
        shown.sort_unstable();
        if reused != shown {
            return invalid("each familiar image must return exactly once");
        }
        let right = self.test_pairs.iter().filter(|p| p.kind == PairKind::KnownRight).count();
        let left = self.test_pairs.iter().filter(|p| p.kind == PairKind::KnownLeft).count();
        if (left, right) != (PAIRS_PER_KIND, PAIRS_PER_KIND) {
            return invalid("familiar images must appear six times per side");
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn pools() -> (Vec<ImageRef>, Vec<ImageRef>) {
        let fam = (0..12).map(|i| ImageRef::new(format!("f{i}"), format!("img/f{i}.png"), ImageRole::Familiar)).collect();
        let nov = (0..24).map(|i| ImageRef::new(format!("n{i}"), format!("img/n{i}.png"), ImageRole::Novel)).collect();
        (fam, nov)
    }

    #[test]
    fn standard_plan_arithmetic() {
        let (f, n) = pools();
        let plan = build_plan(&f, &n, 1).unwrap();
        assert_eq!(plan.familiarization.len(), 12);
        assert_eq!(plan.familiarization_ms(), 180_000);
        assert_eq!(plan.test_ms(), 240_000);
        assert_eq!(plan.kind_counts(), (6, 6, 6));
        plan.validate_protocol().unwrap();
        let blanks: BTreeSet<u64> = plan.test_pairs.iter().map(|p| p.lead_blank_ms).collect();
        assert_eq!(blanks, [333, 334].into_iter().collect());
    }

    #[test]
    fn pool_errors() {
        let (f, n) = pools();
        assert_eq!(build_plan(&f[..11], &n, 1), Err(SessionError::PoolSizeMismatch { familiar: 11, novel: 24 }));
        let mut n2 = n.clone();
        n2[5].id = "f3".into();
        assert_eq!(build_plan(&f, &n2, 1), Err(SessionError::DuplicateId("f3".into())));
    }

    #[test]
    fn schedule_covers_plan() {
        let (f, n) = pools();
        let plan = build_plan(&f, &n, 4).unwrap();
        let s = plan.schedule();
        assert_eq!(s.len(), 12 + 36);
        assert_eq!(s.last().unwrap().end_ms, 420_000);
        assert!(s.windows(2).all(|w| w[0].end_ms == w[1].start_ms));
    }

    #[test]
    fn hash_tracks_content() {
        let (f, n) = pools();
        let a = build_plan(&f, &n, 1).unwrap();
        assert_eq!(a.hash(), build_plan(&f, &n, 1).unwrap().hash());
        assert_ne!(a.hash(), build_plan(&f, &n, 2).unwrap().hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn structure_violations() {
        let (f, n) = pools();
        let mut plan = build_plan(&f, &n, 1).unwrap();
        let k = plan.test_pairs.iter().position(|p| p.kind == PairKind::KnownLeft).unwrap();
        let p = &mut plan.test_pairs[k];
        core::mem::swap(&mut p.left_image, &mut p.right_image);
        assert!(plan.validate_structure().is_err());
    }
}
