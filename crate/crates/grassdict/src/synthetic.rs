//! Synthetic recovery and noise experiments.
//!
//! An original dictionary of `M` random atoms generates `Q` training
//! signals, each the sum of a few randomly drawn atoms with random
//! coefficients (optionally rotated per occurrence). A learner then runs for
//! a fixed number of iterations while detection rates and the four
//! normalized set-distances (Wasserstein/Hausdorff over chordal/Frobenius
//! grounds) are recorded per iteration. Every run is a pure function of its
//! configuration: all randomness flows from the seed.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dictlearn::{detection_rate, Algorithm, Dictionary, Learner};
use crate::linops::Mat;
use crate::setmetric::{
    hausdorff_from_matrix, normalized_score, pairwise_ground, wasserstein_from_matrix,
    DiscreteMeasureSet, Ground,
};
use crate::{Error, Result};

/// Experiment configuration; the defaults are the reference protocol
/// (135 atoms of 10 components and 20 samples, 2000 signals of 3 atoms
/// each, 80 iterations, 10 repetitions for noise averaging).
#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Dictionary size `M`.
    pub atoms: usize,
    /// Samples per atom `N`.
    pub sample_len: usize,
    /// Components per atom `rho`.
    pub components: usize,
    /// Training-set size `Q`.
    pub signals: usize,
    /// Atoms summed into each signal (distinct indices).
    pub atoms_per_signal: usize,
    /// Apply a random per-occurrence rotation when generating signals.
    pub rotate: bool,
    /// Additive white Gaussian noise level; `None` = noiseless.
    pub snr_db: Option<f64>,
    pub seed: u64,
    /// Learning iterations.
    pub iters: usize,
    /// Runs averaged per noise level in [`run_noise_sweep`].
    pub repeats: usize,
    /// Sparsity `K` used by the learner.
    pub sparsity: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            atoms: 135,
            sample_len: 20,
            components: 10,
            signals: 2000,
            atoms_per_signal: 3,
            rotate: false,
            snr_db: None,
            seed: 0,
            iters: 80,
            repeats: 10,
            sparsity: 3,
        }
    }
}

// Independent deterministic streams per generation stage.
const TAG_DICTIONARY: u64 = 0x5eed_0001;
const TAG_DATASET: u64 = 0x5eed_0002;
const TAG_NOISE: u64 = 0x5eed_0003;
const TAG_INIT: u64 = 0x5eed_0004;
const TAG_SWEEP: u64 = 0x5eed_0005;

fn derived_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 over seed xor tag.
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One planted component of a generated signal.
#[derive(Debug, Clone)]
pub struct GroundTruthEntry {
    pub atom: usize,
    pub coeff: f64,
    pub rotation: Option<Mat>,
}

/// Original dictionary of the protocol: i.i.d. uniform(-1, 1) entries,
/// Frobenius-normalized. Deterministic under the config seed.
pub fn gen_original_dictionary(cfg: &SynthConfig) -> Result<Dictionary> {
    if cfg.atoms == 0 || cfg.sample_len == 0 || cfg.components == 0 {
        return Err(Error::invalid("atoms, sample_len and components must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(cfg.seed, TAG_DICTIONARY));
    let atoms: Vec<Mat> = (0..cfg.atoms)
        .map(|_| Mat::from_fn(cfg.sample_len, cfg.components, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    Dictionary::from_unnormalized(atoms)
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// R-diagonal signs folded into Q. Reflections are allowed (`R R^T = I` is
/// the only constraint the rotation-invariant model imposes).
pub fn random_orthogonal(rng: &mut impl Rng, dim: usize) -> Mat {
    let g = Mat::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).scale_mut(-1.0);
        }
    }
    q
}

/// Training signals: each is the sum of `atoms_per_signal` distinct atoms
/// with coefficients of magnitude uniform in `[0.5, 1.5]` and random sign,
/// right-rotated per occurrence when `cfg.rotate` holds. Returns the signals
/// and the planted ground truth.
pub fn gen_dataset(
    dict: &Dictionary,
    cfg: &SynthConfig,
) -> Result<(Vec<Mat>, Vec<Vec<GroundTruthEntry>>)> {
    if cfg.atoms_per_signal == 0 || cfg.atoms_per_signal > dict.len() {
        return Err(Error::invalid(format!(
            "atoms_per_signal {} must be in [1, {}]",
            cfg.atoms_per_signal,
            dict.len()
        )));
    }
    if cfg.signals == 0 {
        return Err(Error::invalid("signals must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(cfg.seed, TAG_DATASET));
    let rho = dict.component_count();
    let mut signals = Vec::with_capacity(cfg.signals);
    let mut truth = Vec::with_capacity(cfg.signals);
    let mut pool: Vec<usize> = (0..dict.len()).collect();
    for _ in 0..cfg.signals {
        // Distinct atom indices via a partial Fisher-Yates shuffle.
        for slot in 0..cfg.atoms_per_signal {
            let pick = rng.gen_range(slot..pool.len());
            pool.swap(slot, pick);
        }
        let mut y = Mat::zeros(dict.sample_len(), rho);
        let mut entries = Vec::with_capacity(cfg.atoms_per_signal);
        for &atom in &pool[..cfg.atoms_per_signal] {
            let magnitude = rng.gen_range(0.5..1.5);
            let coeff = if rng.gen_bool(0.5) { magnitude } else { -magnitude };
            let rotation = if cfg.rotate { Some(random_orthogonal(&mut rng, rho)) } else { None };
            match &rotation {
                Some(r) => y.gemm(coeff, dict.atom(atom), r, 1.0),
                None => {
                    for (yi, xi) in y.as_mut_slice().iter_mut().zip(dict.atom(atom).as_slice()) {
                        *yi += coeff * xi;
                    }
                }
            }
            entries.push(GroundTruthEntry { atom, coeff, rotation });
        }
        signals.push(y);
        truth.push(entries);
    }
    Ok((signals, truth))
}

/// Add white Gaussian noise per signal, scaled so that
/// `10 log10(||signal||^2 / ||noise||^2)` equals `snr_db` exactly. Zero
/// signals are skipped; their indices are returned so callers can log them.
pub fn add_noise(signals: &mut [Mat], snr_db: f64, seed: u64) -> Result<Vec<usize>> {
    if !snr_db.is_finite() {
        return Err(Error::invalid("snr_db must be finite (omit noise instead)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(seed, TAG_NOISE));
    let factor = 10f64.powf(-snr_db / 20.0);
    let mut skipped = Vec::new();
    for (q, signal) in signals.iter_mut().enumerate() {
        let signal_norm = signal.norm();
        let noise = Mat::from_fn(signal.nrows(), signal.ncols(), |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        if signal_norm <= f64::MIN_POSITIVE.sqrt() {
            skipped.push(q);
            continue;
        }
        let noise_norm = noise.norm();
        if noise_norm <= f64::MIN_POSITIVE.sqrt() {
            skipped.push(q);
            continue;
        }
        let scale = signal_norm * factor / noise_norm;
        for (yi, ni) in signal.as_mut_slice().iter_mut().zip(noise.as_slice()) {
            *yi += scale * ni;
        }
    }
    Ok(skipped)
}

/// The six per-iteration quality measures, all as percentages in
/// `[0, 100]`: detection rates at thresholds 0.99 and 0.97 and the
/// normalized Wasserstein-1/Hausdorff set distances over the chordal and
/// Frobenius grounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryMetrics {
    pub t99: f64,
    pub t97: f64,
    pub wass_chordal: f64,
    pub wass_frob: f64,
    pub haus_chordal: f64,
    pub haus_frob: f64,
}

impl RecoveryMetrics {
    pub const COLUMNS: [&'static str; 6] =
        ["t99", "t97", "wass_chordal", "wass_frob", "haus_chordal", "haus_frob"];

    pub fn as_array(&self) -> [f64; 6] {
        [self.t99, self.t97, self.wass_chordal, self.wass_frob, self.haus_chordal, self.haus_frob]
    }
}

/// Evaluates learned dictionaries against a fixed original; the original's
/// subspace and atom sets are converted once.
pub struct RecoveryEvaluator {
    original: Dictionary,
    orig_subspaces: DiscreteMeasureSet,
    orig_atoms: DiscreteMeasureSet,
    rotation_invariant: bool,
}

impl RecoveryEvaluator {
    pub fn new(original: &Dictionary, rotation_invariant: bool) -> Result<Self> {
        Ok(RecoveryEvaluator {
            original: original.clone(),
            orig_subspaces: crate::setmetric::measure_set_of(original, Ground::Chordal)?,
            orig_atoms: crate::setmetric::measure_set_of(original, Ground::Frobenius)?,
            rotation_invariant,
        })
    }

    pub fn evaluate(&self, learned: &Dictionary) -> Result<RecoveryMetrics> {
        let rho = self.original.component_count();
        let t99 = detection_rate(&self.original, learned, 0.99, self.rotation_invariant)?;
        let t97 = detection_rate(&self.original, learned, 0.97, self.rotation_invariant)?;

        let learned_subspaces = crate::setmetric::measure_set_of(learned, Ground::Chordal)?;
        let learned_atoms = crate::setmetric::measure_set_of(learned, Ground::Frobenius)?;
        let d_chordal = pairwise_ground(&self.orig_subspaces, &learned_subspaces, Ground::Chordal)?;
        let d_frob = pairwise_ground(&self.orig_atoms, &learned_atoms, Ground::Frobenius)?;

        let score = |d: f64, ground: Ground| {
            // The Frobenius ground can exceed its rescale cap on
            // anti-correlated matches; saturate at score 0.
            normalized_score(d.min(ground.rescale_cap(rho)), ground, rho)
        };
        let (w_c, _) = wasserstein_from_matrix(
            &d_chordal,
            self.orig_subspaces.weights(),
            learned_subspaces.weights(),
            1.0,
        )?;
        let (w_f, _) = wasserstein_from_matrix(
            &d_frob,
            self.orig_atoms.weights(),
            learned_atoms.weights(),
            1.0,
        )?;
        Ok(RecoveryMetrics {
            t99,
            t97,
            wass_chordal: score(w_c, Ground::Chordal)?,
            wass_frob: score(w_f, Ground::Frobenius)?,
            haus_chordal: score(hausdorff_from_matrix(&d_chordal)?, Ground::Chordal)?,
            haus_frob: score(hausdorff_from_matrix(&d_frob)?, Ground::Frobenius)?,
        })
    }
}

/// One trace row: metrics after a completed learning iteration
/// (`iteration` starts at 1).
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub iteration: usize,
    pub metrics: RecoveryMetrics,
}

/// Per-iteration evolution of one learning run.
#[derive(Debug, Clone, Default)]
pub struct ExperimentTrace {
    pub rows: Vec<TraceRow>,
}

/// Run the full recovery experiment for one algorithm: generate, learn for
/// `cfg.iters` iterations and evaluate every iteration. Detection for the
/// rotation-invariant learner uses registered correlations.
pub fn run_recovery_experiment(cfg: &SynthConfig, algo: Algorithm) -> Result<ExperimentTrace> {
    let original = gen_original_dictionary(cfg)?;
    let (mut signals, _) = gen_dataset(&original, cfg)?;
    if let Some(snr) = cfg.snr_db {
        add_noise(&mut signals, snr, cfg.seed)?;
    }
    let mut learner = Learner::from_training_signals(
        &signals,
        cfg.atoms,
        cfg.sparsity,
        algo,
        derived_seed(cfg.seed, TAG_INIT),
    )?;
    let evaluator = RecoveryEvaluator::new(&original, algo == Algorithm::NDriDla)?;
    let mut trace = ExperimentTrace::default();
    for iteration in 1..=cfg.iters {
        learner.step(&signals)?;
        let metrics = evaluator.evaluate(learner.dictionary())?;
        trace.rows.push(TraceRow { iteration, metrics });
    }
    Ok(trace)
}

/// Final-iteration metrics averaged over `cfg.repeats` seeded runs at one
/// noise level.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    /// `None` means noiseless.
    pub snr_db: Option<f64>,
    pub metrics: RecoveryMetrics,
}

/// Noise-sensitivity sweep: 10, 20, 30 dB and noiseless, each averaged over
/// `cfg.repeats` independent repetitions (fresh dictionary, dataset, noise
/// and initialization per repetition).
pub fn run_noise_sweep(cfg: &SynthConfig, algo: Algorithm) -> Result<Vec<SweepRow>> {
    let levels: [Option<f64>; 4] = [Some(10.0), Some(20.0), Some(30.0), None];
    levels
        .into_par_iter()
        .enumerate()
        .map(|(level_idx, snr_db)| {
            let mut acc = [0.0f64; 6];
            for repeat in 0..cfg.repeats.max(1) {
                let mut run_cfg = cfg.clone();
                run_cfg.snr_db = snr_db;
                run_cfg.seed =
                    derived_seed(cfg.seed, TAG_SWEEP ^ ((level_idx as u64) << 32 | repeat as u64));
                let trace = run_recovery_experiment(&run_cfg, algo)?;
                let last = trace.rows.last().expect("iters >= 1").metrics.as_array();
                for (a, v) in acc.iter_mut().zip(last) {
                    *a += v;
                }
            }
            let r = cfg.repeats.max(1) as f64;
            Ok(SweepRow {
                snr_db,
                metrics: RecoveryMetrics {
                    t99: acc[0] / r,
                    t97: acc[1] / r,
                    wass_chordal: acc[2] / r,
                    wass_frob: acc[3] / r,
                    haus_chordal: acc[4] / r,
                    haus_frob: acc[5] / r,
                },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> SynthConfig {
        SynthConfig {
            atoms: 8,
            sample_len: 8,
            components: 3,
            signals: 120,
            atoms_per_signal: 2,
            rotate: false,
            snr_db: None,
            seed: 42,
            iters: 5,
            repeats: 1,
            sparsity: 2,
        }
    }

    #[test]
    fn dictionary_generation_is_deterministic_and_normalized() {
        let cfg = tiny_cfg();
        let a = gen_original_dictionary(&cfg).unwrap();
        let b = gen_original_dictionary(&cfg).unwrap();
        for (x, y) in a.atoms().iter().zip(b.atoms()) {
            assert_eq!(x, y, "same seed, same dictionary");
            assert!((x.norm() - 1.0).abs() <= 1e-12);
        }
        let mut cfg2 = cfg.clone();
        cfg2.seed = 43;
        let c = gen_original_dictionary(&cfg2).unwrap();
        assert_ne!(a.atoms()[0], c.atoms()[0]);
    }

    #[test]
    fn dataset_respects_structure() {
        let cfg = tiny_cfg();
        let dict = gen_original_dictionary(&cfg).unwrap();
        let (signals, truth) = gen_dataset(&dict, &cfg).unwrap();
        assert_eq!(signals.len(), cfg.signals);
        for entries in &truth {
            assert_eq!(entries.len(), cfg.atoms_per_signal);
            let mut idx: Vec<usize> = entries.iter().map(|e| e.atom).collect();
            idx.sort_unstable();
            idx.dedup();
            assert_eq!(idx.len(), cfg.atoms_per_signal, "distinct indices");
            for e in entries {
                assert!((0.5..=1.5).contains(&e.coeff.abs()));
            }
        }
        // Reconstruction matches the returned ground truth exactly.
        for (y, entries) in signals.iter().zip(&truth) {
            let mut recon = Mat::zeros(cfg.sample_len, cfg.components);
            for e in entries {
                match &e.rotation {
                    Some(r) => recon.gemm(e.coeff, dict.atom(e.atom), r, 1.0),
                    None => {
                        for (a, b) in recon.as_mut_slice().iter_mut().zip(dict.atom(e.atom).as_slice())
                        {
                            *a += e.coeff * b;
                        }
                    }
                }
            }
            assert!((y - recon).norm() < 1e-12);
        }
    }

    #[test]
    fn rotated_dataset_carries_orthogonal_rotations() {
        let mut cfg = tiny_cfg();
        cfg.rotate = true;
        let dict = gen_original_dictionary(&cfg).unwrap();
        let (_, truth) = gen_dataset(&dict, &cfg).unwrap();
        for entries in truth.iter().take(10) {
            for e in entries {
                let r = e.rotation.as_ref().expect("rotation present");
                let dev = (r * r.transpose() - Mat::identity(3, 3)).norm();
                assert!(dev <= 1e-9);
            }
        }
    }

    #[test]
    fn single_atom_signals_have_atom_rank() {
        let mut cfg = tiny_cfg();
        cfg.atoms_per_signal = 1;
        let dict = gen_original_dictionary(&cfg).unwrap();
        let (signals, _) = gen_dataset(&dict, &cfg).unwrap();
        for y in signals.iter().take(10) {
            let rank = crate::linops::svd(y)
                .unwrap()
                .singular_values
                .iter()
                .filter(|&&s| s > 1e-9)
                .count();
            assert!(rank <= cfg.components);
        }
    }

    #[test]
    fn noise_hits_requested_snr() {
        let cfg = tiny_cfg();
        let dict = gen_original_dictionary(&cfg).unwrap();
        let (clean, _) = gen_dataset(&dict, &cfg).unwrap();
        for snr in [10.0, 30.0] {
            let mut noisy = clean.clone();
            let skipped = add_noise(&mut noisy, snr, cfg.seed).unwrap();
            assert!(skipped.is_empty());
            for (y, y0) in noisy.iter().zip(&clean) {
                let noise_norm = (y - y0).norm();
                let measured = 10.0 * (y0.norm_squared() / noise_norm.powi(2)).log10();
                assert!((measured - snr).abs() <= 0.1, "snr {measured} vs {snr}");
                let expected = y0.norm() * 10f64.powf(-snr / 20.0);
                assert!((noise_norm - expected).abs() <= 1e-6 * expected);
            }
        }
        // Distinct seeds give distinct noise.
        let mut n1 = clean.clone();
        let mut n2 = clean.clone();
        add_noise(&mut n1, 20.0, 1).unwrap();
        add_noise(&mut n2, 20.0, 2).unwrap();
        assert_ne!(n1[0], n2[0]);
        // Zero signals are skipped and reported.
        let mut with_zero = vec![Mat::zeros(4, 2)];
        let skipped = add_noise(&mut with_zero, 10.0, 0).unwrap();
        assert_eq!(skipped, vec![0]);
        assert!(with_zero[0].norm() == 0.0);
    }

    #[test]
    fn evaluator_identity_gives_perfect_scores() {
        let cfg = tiny_cfg();
        let dict = gen_original_dictionary(&cfg).unwrap();
        for rotation_invariant in [false, true] {
            let eval = RecoveryEvaluator::new(&dict, rotation_invariant).unwrap();
            let m = eval.evaluate(&dict).unwrap();
            assert_eq!(m.t99, 100.0);
            assert_eq!(m.t97, 100.0);
            assert!(m.wass_chordal > 100.0 - 1e-4, "wass_chordal {}", m.wass_chordal);
            assert!(m.haus_chordal > 100.0 - 1e-4);
            assert!(m.wass_frob > 100.0 - 1e-4);
            assert!(m.haus_frob > 100.0 - 1e-4);
        }
    }

    #[test]
    fn initial_distance_is_positive() {
        // Initialization from training signals starts away from the original
        // dictionary even though the detection rates may already be zero.
        let cfg = tiny_cfg();
        let dict = gen_original_dictionary(&cfg).unwrap();
        let (signals, _) = gen_dataset(&dict, &cfg).unwrap();
        let learner =
            Learner::from_training_signals(&signals, cfg.atoms, cfg.sparsity, Algorithm::MDla, 7)
                .unwrap();
        let eval = RecoveryEvaluator::new(&dict, false).unwrap();
        let m = eval.evaluate(learner.dictionary()).unwrap();
        assert!(m.wass_chordal < 100.0 - 1e-3, "initial distance must be strictly positive");
    }

    #[test]
    fn recovery_experiment_trace_shape_and_determinism() {
        let cfg = tiny_cfg();
        let t1 = run_recovery_experiment(&cfg, Algorithm::MDla).unwrap();
        let t2 = run_recovery_experiment(&cfg, Algorithm::MDla).unwrap();
        assert_eq!(t1.rows.len(), cfg.iters);
        for (a, b) in t1.rows.iter().zip(&t2.rows) {
            assert_eq!(a.iteration, b.iteration);
            assert_eq!(a.metrics.as_array(), b.metrics.as_array(), "byte-identical reruns");
        }
        for row in &t1.rows {
            for v in row.metrics.as_array() {
                assert!((0.0..=100.0).contains(&v));
            }
            assert!(row.metrics.t97 >= row.metrics.t99, "threshold monotonicity");
        }
        // Learning moves the chordal-Wasserstein score up by the end.
        let first = t1.rows.first().unwrap().metrics.wass_chordal;
        let last = t1.rows.last().unwrap().metrics.wass_chordal;
        assert!(last >= first, "wass_chordal fell from {first} to {last}");
    }

    #[test]
    fn noise_sweep_shape() {
        let mut cfg = tiny_cfg();
        cfg.iters = 2;
        cfg.repeats = 2;
        let rows = run_noise_sweep(&cfg, Algorithm::MDla).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].snr_db, Some(10.0));
        assert_eq!(rows[3].snr_db, None);
        for row in rows {
            for v in row.metrics.as_array() {
                assert!((0.0..=100.0).contains(&v));
            }
        }
    }
}
