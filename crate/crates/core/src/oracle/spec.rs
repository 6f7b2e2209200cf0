use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    make_example1, make_example2, make_illconditioned, make_least_squares, make_utility_problem, Example1Params,
    Example2Params, QuadraticParams, StochasticProblem, UtilityParams,
};
use crate::error::Result;

fn default_dim() -> usize {
    20
}
fn default_noise() -> f64 {
    1.0
}
fn default_seed() -> u64 {
    1
}

/// Serializable description of a built-in problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemSpec {
    Example1(Example1Params),
    Example2(Example2Params),
    #[serde(rename = "ill-conditioned")]
    IllConditioned {
        #[serde(default = "default_dim")]
        dim: usize,
        kappa: f64,
        #[serde(default = "default_noise")]
        noise_std: f64,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    LeastSquares(QuadraticParams),
    Utility(UtilityParams),
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Arc<dyn StochasticProblem>> {
        Ok(match self {
            ProblemSpec::Example1(p) => Arc::new(make_example1(p.clone())?),
            ProblemSpec::Example2(p) => Arc::new(make_example2(p.clone())?),
            ProblemSpec::IllConditioned {
                dim,
                kappa,
                noise_std,
                seed,
            } => Arc::new(make_illconditioned(*dim, *kappa, *noise_std, *seed)?),
            ProblemSpec::LeastSquares(p) => Arc::new(make_least_squares(p.clone())?),
            ProblemSpec::Utility(p) => Arc::new(make_utility_problem(p.clone())?),
        })
    }
}
