use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::motion::{MotionFamily, MotionSpec};
use super::physics::simulate;
use super::{FingerConfig, Sample, SampleMeta, SceneConfig, DODECAGON_VERTICES, SAMPLE_RATE, STEPS, TRAIN_ELASTICITIES};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Rng};

/// The six dataset splits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SplitName {
    Trainset,
    TestBase,
    TestMotion,
    TestConfig,
    TestFingers,
    TestShuffle,
}

impl SplitName {
    pub const ALL: [SplitName; 6] = [
        SplitName::Trainset,
        SplitName::TestBase,
        SplitName::TestMotion,
        SplitName::TestConfig,
        SplitName::TestFingers,
        SplitName::TestShuffle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Trainset => "Trainset",
            SplitName::TestBase => "TestBase",
            SplitName::TestMotion => "TestMotion",
            SplitName::TestConfig => "TestConfig",
            SplitName::TestFingers => "TestFingers",
            SplitName::TestShuffle => "TestShuffle",
        }
    }

    fn stream(self) -> u64 {
        self as u64 + 1
    }

    pub fn valid_names() -> String {
        Self::ALL.map(Self::as_str).join(", ")
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownSplit {
                name: s.to_string(),
                valid: Self::valid_names(),
            })
    }
}

/// Knobs of dataset generation. Defaults reproduce the documented sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub master_seed: u64,
    /// Motion draws per (configuration, elasticity) cell of the Trainset.
    pub draws_per_cell: usize,
    pub train_configs: usize,
    pub test_configs: usize,
    /// Samples in every test split.
    pub test_samples: usize,
    /// Actuation noise standard deviation for TestMotion.
    pub motion_noise: f64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            master_seed: 0,
            draws_per_cell: 5,
            train_configs: 30,
            test_configs: 13,
            test_samples: 60,
            motion_noise: 0.02,
        }
    }
}

/// Generation record stored beside each split's tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub split: SplitName,
    pub format_version: u32,
    pub master_seed: u64,
    pub sample_count: usize,
    pub steps: usize,
    pub sample_rate: f64,
    pub options: GenerateOptions,
    pub elasticities: Vec<f64>,
    /// Finger vertex sets the split draws from; `config_id` indexes this list.
    pub configurations: Vec<Vec<usize>>,
    pub samples: Vec<SampleMeta>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub samples: Vec<Sample>,
    pub manifest: Manifest,
}

/// 4-finger vertex sets: all 4-subsets of the dodecagon in lexicographic
/// order, shuffled by the master seed. Returns (train, test-config, rest).
fn configuration_pools(opts: &GenerateOptions) -> (Vec<Vec<usize>>, Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut all = Vec::new();
    let n = DODECAGON_VERTICES;
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for d in c + 1..n {
                    all.push(vec![a, b, c, d]);
                }
            }
        }
    }
    Rng::derived(opts.master_seed, &[0]).shuffle(&mut all);
    let rest = all.split_off(opts.train_configs + opts.test_configs);
    let test = all.split_off(opts.train_configs);
    (all, test, rest)
}

/// The Trainset configurations for `master_seed` under default options.
pub fn training_configurations(master_seed: u64) -> Vec<Vec<usize>> {
    configuration_pools(&GenerateOptions {
        master_seed,
        ..GenerateOptions::default()
    })
    .0
}

struct Plan {
    config_id: usize,
    vertices: Vec<usize>,
    elasticity: f64,
    family: MotionFamily,
    shuffle: bool,
}

/// All six splits with default options and the given seed.
pub fn generate_splits(master_seed: u64) -> Result<Vec<DatasetSplit>> {
    generate_splits_with(&GenerateOptions {
        master_seed,
        ..GenerateOptions::default()
    })
}

pub fn generate_splits_with(opts: &GenerateOptions) -> Result<Vec<DatasetSplit>> {
    if opts.train_configs + opts.test_configs > 495 || opts.train_configs == 0 {
        return Err(Error::config("configuration counts exceed the 495 available 4-subsets"));
    }
    let (train, test_config, novel) = configuration_pools(opts);
    SplitName::ALL
        .iter()
        .map(|&name| build_split(name, opts, &train, &test_config, &novel))
        .collect()
}

fn build_split(
    name: SplitName,
    opts: &GenerateOptions,
    train: &[Vec<usize>],
    test_config: &[Vec<usize>],
    novel: &[Vec<usize>],
) -> Result<DatasetSplit> {
    let mut rng = Rng::derived(opts.master_seed, &[name.stream(), u64::MAX]);
    let mut configurations: Vec<Vec<usize>> = Vec::new();
    let mut plans = Vec::new();
    let pick_family = |rng: &mut Rng| MotionFamily::TRAINING[rng.below(3)];
    let pick_k = |rng: &mut Rng| TRAIN_ELASTICITIES[rng.below(TRAIN_ELASTICITIES.len())];
    let mut elasticities = TRAIN_ELASTICITIES.to_vec();

    match name {
        SplitName::Trainset => {
            configurations = train.to_vec();
            for (c, vertices) in train.iter().enumerate() {
                for (e, &k) in TRAIN_ELASTICITIES.iter().enumerate() {
                    for d in 0..opts.draws_per_cell {
                        plans.push(Plan {
                            config_id: c,
                            vertices: vertices.clone(),
                            elasticity: k,
                            family: MotionFamily::TRAINING[(c + e + d) % 3],
                            shuffle: false,
                        });
                    }
                }
            }
        }
        SplitName::TestBase => {
            // Half seen configurations, half novel ones; stiffness includes
            // values between the training grid points.
            configurations = train.to_vec();
            configurations.extend(novel.iter().take(opts.test_samples.div_ceil(2)).cloned());
            elasticities = vec![4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
            for i in 0..opts.test_samples {
                let config_id = if i % 2 == 0 {
                    train.len() + (i / 2) % (configurations.len() - train.len())
                } else {
                    rng.below(train.len())
                };
                plans.push(Plan {
                    config_id,
                    vertices: configurations[config_id].clone(),
                    elasticity: elasticities[rng.below(elasticities.len())],
                    family: pick_family(&mut rng),
                    shuffle: false,
                });
            }
        }
        SplitName::TestMotion | SplitName::TestShuffle => {
            configurations = train.to_vec();
            for _ in 0..opts.test_samples {
                let config_id = rng.below(train.len());
                plans.push(Plan {
                    config_id,
                    vertices: train[config_id].clone(),
                    elasticity: pick_k(&mut rng),
                    family: if name == SplitName::TestMotion {
                        MotionFamily::X
                    } else {
                        pick_family(&mut rng)
                    },
                    shuffle: name == SplitName::TestShuffle,
                });
            }
        }
        SplitName::TestConfig => {
            configurations = test_config.to_vec();
            for i in 0..opts.test_samples {
                let config_id = i % test_config.len();
                plans.push(Plan {
                    config_id,
                    vertices: test_config[config_id].clone(),
                    elasticity: pick_k(&mut rng),
                    family: pick_family(&mut rng),
                    shuffle: false,
                });
            }
        }
        SplitName::TestFingers => {
            for _ in 0..opts.test_samples {
                let mut vertices = train[rng.below(train.len())].clone();
                vertices.remove(rng.below(vertices.len()));
                let config_id = match configurations.iter().position(|c| *c == vertices) {
                    Some(id) => id,
                    None => {
                        configurations.push(vertices.clone());
                        configurations.len() - 1
                    }
                };
                plans.push(Plan {
                    config_id,
                    vertices,
                    elasticity: pick_k(&mut rng),
                    family: pick_family(&mut rng),
                    shuffle: false,
                });
            }
        }
    }

    let samples = plans
        .par_iter()
        .enumerate()
        .map(|(i, plan)| run_plan(opts, name, i, plan))
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest {
        split: name,
        format_version: super::io::TENSORS_VERSION,
        master_seed: opts.master_seed,
        sample_count: samples.len(),
        steps: STEPS,
        sample_rate: SAMPLE_RATE,
        options: opts.clone(),
        elasticities,
        configurations,
        samples: samples.iter().map(|s| s.meta.clone()).collect(),
    };
    Ok(DatasetSplit {
        name,
        samples,
        manifest,
    })
}

fn run_plan(opts: &GenerateOptions, name: SplitName, index: usize, plan: &Plan) -> Result<Sample> {
    let seed = derive_seed(opts.master_seed, &[name.stream(), index as u64]);
    let mut rng = Rng::new(seed);
    let fingers: Vec<FingerConfig> = plan
        .vertices
        .iter()
        .map(|&v| FingerConfig::new(v, plan.elasticity))
        .collect();
    let motions = fingers
        .iter()
        .map(|_| MotionSpec::random(plan.family, opts.motion_noise, &mut rng))
        .collect();
    let scene = SceneConfig { fingers, motions, seed };
    let mut sample = simulate(&scene, STEPS, SAMPLE_RATE)?;
    sample.meta.config_id = plan.config_id;
    if plan.shuffle {
        let perm = rng.permutation(sample.nodes);
        sample = sample.permuted(&perm)?;
    }
    Ok(sample)
}
