//! Deterministic inputs shared by the kernel benchmarks.

use nalgebra::{DMatrix, DVector, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lienn_core::scenario::INPUTS;
use lienn_core::validation::{random_pose, random_twist};
use lienn_core::{ErrFunParams, NNWeights, ScenarioConfig, Se3};

/// Sample count per kernel batch.
pub const BATCH: usize = 64;

pub struct Fixture {
    pub poses: Vec<Se3>,
    pub twists: Vec<Vector6<f64>>,
    pub errfun: ErrFunParams,
    pub weights: NNWeights,
    pub input: DVector<f64>,
    pub grad: DMatrix<f64>,
}

impl Fixture {
    /// Case-study sizes: 6 outputs, the configured hidden width, 42 inputs.
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = ScenarioConfig::default();
        let hidden = cfg.network.hidden;
        let poses = (0..BATCH).map(|_| random_pose(&mut rng, 3.0, 5.0)).collect();
        let twists = (0..BATCH).map(|_| random_twist(&mut rng, 2.0)).collect();
        let weights = NNWeights::uniform(6, hidden, INPUTS, 0.1, &mut rng);
        let input = DVector::from_fn(INPUTS, |i, _| ((i as f64) * 0.37).sin());
        let grad = DMatrix::from_fn(6, hidden, |i, j| ((i * hidden + j) as f64 * 0.11).cos());
        Fixture {
            poses,
            twists,
            errfun: cfg.errfun,
            weights,
            input,
            grad,
        }
    }
}

/// Case-study config shortened to `steps` steps.
pub fn short_config(steps: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.duration = cfg.dt * steps as f64;
    cfg.log_stride = steps.max(1);
    cfg.monitor.bound_samples = 0;
    cfg
}
