use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::weights::{architecture_hash, WeightContainer};

/// How a section is filled by seeded random initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in ±1/√fan_in.
    Uniform {
        fan_in: usize,
    },
    /// Uniform in ±1, used for learnable tokens.
    Token,
    Ones,
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Ordered list of weight sections making up an architecture.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Schema {
    sections: Vec<SectionSpec>,
}

impl Schema {
    pub fn new() -> Self {
        Schema::default()
    }

    fn push(&mut self, name: &str, shape: Vec<usize>, init: Init) {
        debug_assert!(self.sections.iter().all(|s| s.name != name), "duplicate section {name}");
        self.sections.push(SectionSpec {
            name: name.to_string(),
            shape,
            init,
        });
    }

    pub fn uniform(&mut self, name: &str, shape: Vec<usize>, fan_in: usize) {
        self.push(name, shape, Init::Uniform { fan_in });
    }

    pub fn token(&mut self, name: &str, shape: Vec<usize>) {
        self.push(name, shape, Init::Token);
    }

    pub fn ones(&mut self, name: &str, shape: Vec<usize>) {
        self.push(name, shape, Init::Ones);
    }

    pub fn zeros(&mut self, name: &str, shape: Vec<usize>) {
        self.push(name, shape, Init::Zeros);
    }

    pub fn sections(&self) -> &[SectionSpec] {
        &self.sections
    }

    pub fn parameter_count(&self) -> usize {
        self.sections.iter().map(|s| s.shape.iter().product::<usize>()).sum()
    }

    pub fn arch_hash(&self) -> String {
        architecture_hash(self.sections.iter().map(|s| (s.name.as_str(), s.shape.as_slice())))
    }

    /// Fills every section in declaration order from one ChaCha8 stream.
    pub fn random_container(&self, seed: u64) -> WeightContainer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = WeightContainer::new();
        for s in &self.sections {
            let n: usize = s.shape.iter().product();
            let data: Vec<f32> = match s.init {
                Init::Uniform { fan_in } => {
                    let b = 1.0 / (fan_in.max(1) as f32).sqrt();
                    (0..n).map(|_| rng.gen_range(-b..b)).collect()
                }
                Init::Token => (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
                Init::Ones => vec![1.0; n],
                Init::Zeros => vec![0.0; n],
            };
            out.insert(&s.name, s.shape.clone(), data);
        }
        out
    }
}
