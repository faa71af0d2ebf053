//! Figures of merit over PUF instances and challenge-response corpora:
//! uniqueness, randomness (bit balance), reliability (intra-distance) and
//! inter-instance Hamming distance.
//!
//! All metrics accumulate exact integer bit counts in index order and divide
//! once at the end, so results are identical regardless of how the caller
//! parallelizes corpus generation.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::puf::{self, Challenge, EvalContext, PufInstance, ResponseBits};

/// Challenge-response corpus captured from one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CrpCorpus {
    pub entries: Vec<(Challenge, ResponseBits)>,
    pub source_instance_id: String,
}

impl CrpCorpus {
    pub fn from_instance(
        inst: &PufInstance,
        challenges: &[Challenge],
        eval_seed: u64,
        source_instance_id: impl Into<String>,
    ) -> Self {
        let ctx = EvalContext::new(eval_seed);
        let entries = challenges.iter().map(|c| (*c, inst.evaluate(*c, &ctx))).collect();
        Self { entries, source_instance_id: source_instance_id.into() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("need at least two corpora, got {0}")]
    NeedAtLeastTwoCorpora(usize),
    #[error("corpora must share one challenge sequence")]
    ChallengeSetMismatch,
    #[error("repeats must be at least 2, got {0}")]
    TooFewRepeats(usize),
    #[error("challenge list is empty")]
    EmptyChallengeList,
    #[error("need {needed} eval seeds (reference + repeats), got {got}")]
    NotEnoughEvalSeeds { needed: usize, got: usize },
}

fn check_same_challenges(corpora: &[CrpCorpus]) -> Result<(), MetricsError> {
    let first = &corpora[0];
    if first.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    for c in &corpora[1..] {
        if c.len() != first.len()
            || c.entries.iter().zip(&first.entries).any(|((ca, _), (cb, _))| ca != cb)
        {
            return Err(MetricsError::ChallengeSetMismatch);
        }
    }
    Ok(())
}

/// Mean pairwise fractional Hamming distance over all instance pairs and
/// challenges, as a percentage. Ideal for distinct devices is 50.
pub fn uniqueness(corpora: &[CrpCorpus]) -> Result<f64, MetricsError> {
    if corpora.len() < 2 {
        return Err(MetricsError::NeedAtLeastTwoCorpora(corpora.len()));
    }
    check_same_challenges(corpora)?;
    let n = corpora[0].len();
    let mut dist_bits = 0u64;
    let mut pairs = 0u64;
    for a in 0..corpora.len() {
        for b in (a + 1)..corpora.len() {
            pairs += 1;
            for idx in 0..n {
                dist_bits +=
                    u64::from(corpora[a].entries[idx].1.hamming(corpora[b].entries[idx].1));
            }
        }
    }
    Ok(dist_bits as f64 / (pairs * n as u64 * 64) as f64 * 100.0)
}

/// Bit-balance score: with `p` the fraction of 1-bits over every response
/// bit in the corpus, returns `2 * min(p, 1-p) * 100`. 100 means perfectly
/// balanced, 0 means constant.
pub fn randomness(corpus: &CrpCorpus) -> Result<f64, MetricsError> {
    if corpus.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let ones: u64 = corpus.entries.iter().map(|(_, r)| u64::from(r.0.count_ones())).sum();
    let total = corpus.len() as u64 * 64;
    let p = ones as f64 / total as f64;
    Ok(2.0 * p.min(1.0 - p) * 100.0)
}

/// Reliability as `100 - mean intra-instance fractional HD` between a
/// reference evaluation and each of `repeats` re-evaluations. Seed `0` of
/// `ctx_seeds` keys the reference; seeds `1..=repeats` key the repeats.
pub fn reliability(
    instance: &PufInstance,
    challenges: &[Challenge],
    repeats: usize,
    ctx_seeds: &[u64],
) -> Result<f64, MetricsError> {
    if repeats < 2 {
        return Err(MetricsError::TooFewRepeats(repeats));
    }
    if challenges.is_empty() {
        return Err(MetricsError::EmptyChallengeList);
    }
    if ctx_seeds.len() < repeats + 1 {
        return Err(MetricsError::NotEnoughEvalSeeds {
            needed: repeats + 1,
            got: ctx_seeds.len(),
        });
    }
    let reference: Vec<ResponseBits> = challenges
        .iter()
        .map(|c| instance.evaluate(*c, &EvalContext::new(ctx_seeds[0])))
        .collect();
    let samples: Vec<Vec<ResponseBits>> = ctx_seeds[1..=repeats]
        .iter()
        .map(|seed| {
            challenges.iter().map(|c| instance.evaluate(*c, &EvalContext::new(*seed))).collect()
        })
        .collect();
    Ok(reliability_from_samples(&reference, &samples))
}

/// The reliability arithmetic on already-captured evaluations; split out so
/// the averaging can be checked against tampered samples.
pub fn reliability_from_samples(
    reference: &[ResponseBits],
    repeats: &[Vec<ResponseBits>],
) -> f64 {
    let mut dist_bits = 0u64;
    for rep in repeats {
        for (r, r0) in rep.iter().zip(reference) {
            dist_bits += u64::from(r.hamming(*r0));
        }
    }
    let total = (repeats.len() * reference.len() * 64) as u64;
    100.0 - dist_bits as f64 / total as f64 * 100.0
}

/// Mean fractional Hamming distance between paired responses of two corpora
/// over one shared challenge sequence, as a percentage.
pub fn inter_hd(a: &CrpCorpus, b: &CrpCorpus) -> Result<f64, MetricsError> {
    let pair = [a.clone(), b.clone()];
    check_same_challenges(&pair)?;
    let mut dist_bits = 0u64;
    for ((_, ra), (_, rb)) in a.entries.iter().zip(&b.entries) {
        dist_bits += u64::from(ra.hamming(*rb));
    }
    Ok(dist_bits as f64 / (a.len() as u64 * 64) as f64 * 100.0)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SampleCounts {
    pub instances: usize,
    pub challenges: usize,
    pub repeats: usize,
    pub pairs: usize,
}

/// Figures-of-merit summary for one evaluation run. Percentages are rounded
/// to two decimal places at report time; the metric functions themselves
/// stay full precision.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub uniqueness_pct: f64,
    pub randomness_pct: f64,
    pub inter_hd_pct: f64,
    pub reliability_pct: f64,
    pub sample_counts: SampleCounts,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl MetricsReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<14} {:>10}\n", "metric", "percent"));
        out.push_str(&format!("{:<14} {:>10.2}\n", "uniqueness", self.uniqueness_pct));
        out.push_str(&format!("{:<14} {:>10.2}\n", "randomness", self.randomness_pct));
        out.push_str(&format!("{:<14} {:>10.2}\n", "inter-hd", self.inter_hd_pct));
        out.push_str(&format!("{:<14} {:>10.2}\n", "reliability", self.reliability_pct));
        out.push_str(&format!(
            "samples: {} instances, {} challenges, {} repeats, {} pairs\n",
            self.sample_counts.instances,
            self.sample_counts.challenges,
            self.sample_counts.repeats,
            self.sample_counts.pairs
        ));
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MetricsRunConfig {
    pub instances: usize,
    pub challenges: usize,
    pub repeats: usize,
    pub noise_sigma: f64,
}

impl Default for MetricsRunConfig {
    fn default() -> Self {
        Self { instances: 10, challenges: 1000, repeats: 10, noise_sigma: 0.0 }
    }
}

/// Generate seeded instances, capture corpora over one shared challenge set
/// and produce the full report. `inter_hd` is reported for the first
/// instance pair; `randomness` is the mean over instances in index order.
pub fn evaluate_instances(
    master_seed: u64,
    cfg: &MetricsRunConfig,
) -> Result<(MetricsReport, Vec<CrpCorpus>), MetricsError> {
    if cfg.instances < 2 {
        return Err(MetricsError::NeedAtLeastTwoCorpora(cfg.instances));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    let challenge_seed = rng.next_u64();
    let challenges = puf::random_challenges(challenge_seed, cfg.challenges);

    let mut corpora = Vec::with_capacity(cfg.instances);
    let mut first_instance = None;
    for idx in 0..cfg.instances {
        let inst_seed = rng.next_u64();
        let inst = puf::new_instance(inst_seed, cfg.noise_sigma)
            .expect("non-negative sigma checked by caller");
        let eval_seed = rng.next_u64();
        corpora.push(CrpCorpus::from_instance(&inst, &challenges, eval_seed, format!("inst{idx}")));
        if idx == 0 {
            first_instance = Some(inst);
        }
    }

    let uniq = uniqueness(&corpora)?;
    let mut rand_sum = 0.0;
    for c in &corpora {
        rand_sum += randomness(c)?;
    }
    let inter = inter_hd(&corpora[0], &corpora[1])?;
    let ctx_seeds: Vec<u64> = (0..=cfg.repeats).map(|_| rng.next_u64()).collect();
    let rel = reliability(
        first_instance.as_ref().expect("instances >= 2"),
        &challenges,
        cfg.repeats,
        &ctx_seeds,
    )?;

    let report = MetricsReport {
        uniqueness_pct: round2(uniq),
        randomness_pct: round2(rand_sum / cfg.instances as f64),
        inter_hd_pct: round2(inter),
        reliability_pct: round2(rel),
        sample_counts: SampleCounts {
            instances: cfg.instances,
            challenges: cfg.challenges,
            repeats: cfg.repeats,
            pairs: cfg.instances * (cfg.instances - 1) / 2,
        },
    };
    Ok((report, corpora))
}
