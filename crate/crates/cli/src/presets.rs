use std::path::PathBuf;

use ptcont_core::continuation::{ContinuationConfig, CostWeights, NewtonConfig, Predictor};
use ptcont_core::models::PoissonConfig;

use crate::config::{ExperimentConfig, ModelSpec, Sweep};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    Fig3,
    Fig4,
    Fig5,
    Table1,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Scale {
    /// 24x24 inversion mesh; fig3 stops at N = 6.
    #[default]
    Desk,
    /// 50x50 inversion mesh with a 200x200 data mesh.
    Paper,
}

const BOTH: [Predictor; 2] = [Predictor::ForwardEuler, Predictor::ModifiedEuler];
const RANKS: [usize; 5] = [0, 5, 10, 15, 20];

/// Sweep settings for one published experiment.
pub fn preset(figure: Figure, scale: Scale) -> ExperimentConfig {
    let mesh = match scale {
        Scale::Desk => 24,
        Scale::Paper => 50,
    };
    let name = format!("{figure:?}-{scale:?}").to_lowercase();
    let mut weights = CostWeights::default();
    let mut newton_eps = 1e-2;
    let sweep = match figure {
        Figure::Fig3 => {
            newton_eps = 1e-4;
            Sweep {
                alpha: vec![0.1, 0.2, 0.3],
                predictor: BOTH.to_vec(),
                n_steps: match scale {
                    Scale::Desk => (2..=6).collect(),
                    Scale::Paper => (2..=9).collect(),
                },
                eps_cg: vec![1e-4],
                ranks: vec![(0, 20)],
            }
        }
        Figure::Fig4 => Sweep {
            alpha: vec![0.2],
            predictor: BOTH.to_vec(),
            n_steps: vec![3],
            eps_cg: vec![1e-1, 1e-2, 1e-3, 1e-4],
            ranks: vec![(0, 20)],
        },
        Figure::Fig5 => Sweep {
            alpha: vec![0.2],
            predictor: vec![Predictor::ModifiedEuler],
            n_steps: vec![3],
            eps_cg: vec![1e-2],
            ranks: RANKS.iter().flat_map(|&ri| RANKS.iter().map(move |&ru| (ri, ru))).collect(),
        },
        Figure::Table1 => {
            weights.state = 4;
            Sweep {
                alpha: vec![0.2],
                predictor: vec![Predictor::ModifiedEuler],
                n_steps: vec![3],
                eps_cg: vec![1e-1, 1e-2, 1e-3],
                ranks: vec![(0, 20)],
            }
        }
    };
    ExperimentConfig {
        model: ModelSpec::Poisson(PoissonConfig::with_mesh(mesh)),
        sweep,
        output_dir: PathBuf::from("results").join(name),
        seed: 0,
        baseline: figure != Figure::Fig5,
        continuation: ContinuationConfig {
            weights,
            ..ContinuationConfig::default()
        },
        newton: NewtonConfig {
            eps_cg: newton_eps,
            weights,
            ..NewtonConfig::default()
        },
    }
}
