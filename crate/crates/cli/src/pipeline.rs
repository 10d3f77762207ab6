//! Builds the shared objects (space, tree, operator, system, stopping
//! decompositions) that the suites consume, in dependency order.

use std::sync::Arc;

use anyhow::Context as _;

use czkit_core::accretive::{build_system, AccretiveSystem, Side};
use czkit_core::dyadic::{build_tree, DyadicTree};
use czkit_core::operator::{assemble, KernelOperator};
use czkit_core::space::PointSpace;
use czkit_core::stopping::{run_stopping, StoppingConfig, StoppingDecomposition};
use czkit_core::C64;

use crate::config::{RunConfig, MAX_POINTS};

pub struct Context {
    pub config: RunConfig,
    pub space: Arc<PointSpace>,
    pub tree: DyadicTree,
    pub op: KernelOperator,
    pub sys: AccretiveSystem,
    pub c_stop: f64,
    pub d1: StoppingDecomposition,
    pub d2: StoppingDecomposition,
}

impl Context {
    pub fn build(config: RunConfig) -> anyhow::Result<Self> {
        config.validate()?;
        let space = Arc::new(config.space.build().context("building the space")?);
        if space.len() > MAX_POINTS {
            anyhow::bail!("space has {} points; the dense toolkit caps at {MAX_POINTS}", space.len());
        }
        let tree = build_tree(Arc::clone(&space), config.delta, config.max_depth)
            .context("building the cube tree")?;
        let op = assemble(Arc::clone(&space), &config.kernel).context("assembling the operator")?;
        let sys = build_system(&tree, &config.system).context("building the accretive system")?;

        // size constant drives the stopping threshold
        let size = czkit_core::accretive::verify_size(&tree, &sys, &op);
        let c_stop = config.stopping.c_stop_factor * size.c_size.max(1.0);
        let stop_cfg = StoppingConfig {
            delta_stop: config.stopping.delta_stop,
            c_stop,
            maximal_variant: config.stopping.maximal_variant,
        };
        let b1 = sys.full(&tree, Side::One, 0);
        let b2 = sys.full(&tree, Side::Two, 0);
        let tb1 = op.apply(&b1);
        let tsb2 = op.apply_adjoint(&b2);
        let d1 = run_stopping(&tree, 0, Side::One, &b1, &tb1, &sys, &stop_cfg)
            .context("side-1 stopping decomposition")?;
        let d2 = run_stopping(&tree, 0, Side::Two, &b2, &tsb2, &sys, &stop_cfg)
            .context("side-2 stopping decomposition")?;

        Ok(Context { config, space, tree, op, sys, c_stop, d1, d2 })
    }

    /// Deterministic bounded probe functions on the whole space.
    pub fn probe_pair(&self, index: u64) -> (Vec<C64>, Vec<C64>) {
        use rand::Rng;
        let n = self.space.len();
        let mut rng = czkit_core::deterministic_rng(self.config.seed.wrapping_add(index * 7919));
        let f: Vec<C64> = (0..n).map(|_| C64::new(rng.random::<f64>() * 2.0 - 1.0, 0.0)).collect();
        let g: Vec<C64> = (0..n).map(|_| C64::new(rng.random::<f64>() * 2.0 - 1.0, 0.0)).collect();
        (f, g)
    }
}
