//! Shared-private multi-domain classifier.
//!
//! One shared extractor feeds every domain; each domain also owns a private
//! extractor. The classifier consumes the concatenation of both
//! representations, and a domain discriminator sees only the shared one.

mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Matrix, Var};

pub use checkpoint::{load_checkpoint, save_checkpoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub shared_dim: usize,
    pub private_dim: usize,
    pub num_domains: usize,
    pub num_classes: usize,
    /// `true`: one classifier for all domains. `false`: one head per domain.
    pub shared_classifier: bool,
    /// Number of affine+sigmoid layers in each extractor.
    pub extractor_depth: usize,
    pub init_seed: u64,
    /// Multiplier on the Glorot uniform bound.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 5000,
            shared_dim: 64,
            private_dim: 64,
            num_domains: 4,
            num_classes: 2,
            shared_classifier: true,
            extractor_depth: 1,
            init_seed: 0,
            init_scale: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("shared_dim", self.shared_dim),
            ("private_dim", self.private_dim),
            ("num_classes", self.num_classes),
            ("extractor_depth", self.extractor_depth),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        if self.num_domains < 2 {
            return Err(Error::config("num_domains must be at least 2"));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(Error::config("init_scale must be positive"));
        }
        Ok(())
    }

    pub fn num_heads(&self) -> usize {
        if self.shared_classifier {
            1
        } else {
            self.num_domains
        }
    }
}

/// Which part of the network a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    Shared,
    Private(usize),
    Classifier(usize),
    Discriminator,
}

impl Component {
    pub fn label(self) -> String {
        match self {
            Component::Shared => "shared".into(),
            Component::Private(k) => format!("private{k}"),
            Component::Classifier(k) => format!("classifier{k}"),
            Component::Discriminator => "discriminator".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub component: Component,
    pub value: Matrix,
}

/// Indices of a layer's weight and bias in the parameter registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpModel {
    config: ModelConfig,
    params: Vec<Parameter>,
    shared: Vec<Dense>,
    private: Vec<Vec<Dense>>,
    heads: Vec<Dense>,
    discriminator: Dense,
}

/// Graph nodes for every parameter of a model, in registry order.
#[derive(Debug, Clone)]
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    /// Wraps nodes the caller already added, one per registry entry.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn var(&self, index: usize) -> Var {
        self.vars[index]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    pub shared: Var,
    pub private: Var,
    pub class_logits: Var,
    pub class_probs: Var,
    pub domain_logits: Var,
}

struct Initializer {
    rng: ChaCha8Rng,
    scale: f64,
    params: Vec<Parameter>,
}

impl Initializer {
    fn dense(&mut self, name: &str, component: Component, fan_in: usize, fan_out: usize) -> Dense {
        let bound = self.scale * (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| self.rng.random_range(-bound..=bound))
            .collect();
        let weight = Matrix::from_vec(fan_in, fan_out, data).expect("sized above");
        self.params.push(Parameter {
            name: format!("{name}.weight"),
            component,
            value: weight,
        });
        self.params.push(Parameter {
            name: format!("{name}.bias"),
            component,
            value: Matrix::zeros(1, fan_out),
        });
        Dense {
            weight: self.params.len() - 2,
            bias: self.params.len() - 1,
        }
    }

    fn stack(&mut self, name: &str, component: Component, input: usize, width: usize, depth: usize) -> Vec<Dense> {
        (0..depth)
            .map(|l| {
                let fan_in = if l == 0 { input } else { width };
                self.dense(&format!("{name}.{l}"), component, fan_in, width)
            })
            .collect()
    }
}

impl SpModel {
    /// Glorot-uniform weights scaled by `init_scale`, zero biases.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut init = Initializer {
            rng: ChaCha8Rng::seed_from_u64(config.init_seed),
            scale: config.init_scale,
            params: Vec::new(),
        };
        let depth = config.extractor_depth;
        let shared = init.stack("shared", Component::Shared, config.input_dim, config.shared_dim, depth);
        let private = (0..config.num_domains)
            .map(|k| {
                init.stack(
                    &format!("private{k}"),
                    Component::Private(k),
                    config.input_dim,
                    config.private_dim,
                    depth,
                )
            })
            .collect();
        let concat = config.shared_dim + config.private_dim;
        let heads = (0..config.num_heads())
            .map(|k| {
                init.dense(
                    &format!("classifier{k}"),
                    Component::Classifier(k),
                    concat,
                    config.num_classes,
                )
            })
            .collect();
        let discriminator = init.dense(
            "discriminator",
            Component::Discriminator,
            config.shared_dim,
            config.num_domains,
        );
        Ok(Self {
            config,
            params: init.params,
            shared,
            private,
            heads,
            discriminator,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Registry indices of every parameter whose component satisfies `pred`.
    pub fn param_indices(&self, pred: impl Fn(Component) -> bool) -> Vec<usize> {
        (0..self.params.len())
            .filter(|&i| pred(self.params[i].component))
            .collect()
    }

    /// Adds every parameter to `g`; those matching `trainable` are tracked,
    /// the rest enter as constants.
    pub fn bind(&self, g: &mut Graph, trainable: impl Fn(Component) -> bool) -> Binding {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if trainable(p.component) {
                    g.param(p.value.clone())
                } else {
                    g.constant(p.value.clone())
                }
            })
            .collect();
        Binding { vars }
    }

    fn check_domain(&self, domain: usize) -> Result<()> {
        if domain >= self.config.num_domains {
            return Err(Error::Index {
                what: "domain",
                index: domain,
                bound: self.config.num_domains,
            });
        }
        Ok(())
    }

    fn check_input(&self, g: &Graph, x: Var) -> Result<()> {
        let shape = g.value(x).shape();
        if shape.1 != self.config.input_dim {
            return Err(Error::Shape {
                op: "model input",
                left: shape,
                right: (shape.0, self.config.input_dim),
            });
        }
        Ok(())
    }

    fn apply(g: &mut Graph, b: &Binding, layer: Dense, x: Var) -> Result<Var> {
        g.affine(x, b.var(layer.weight), b.var(layer.bias))
    }

    fn extract(g: &mut Graph, b: &Binding, layers: &[Dense], x: Var) -> Result<Var> {
        layers.iter().try_fold(x, |h, &layer| {
            let pre = Self::apply(g, b, layer, h)?;
            Ok(g.sigmoid(pre))
        })
    }

    pub fn shared_features(&self, g: &mut Graph, b: &Binding, x: Var) -> Result<Var> {
        self.check_input(g, x)?;
        Self::extract(g, b, &self.shared, x)
    }

    pub fn private_features(&self, g: &mut Graph, b: &Binding, x: Var, domain: usize) -> Result<Var> {
        self.check_domain(domain)?;
        self.check_input(g, x)?;
        Self::extract(g, b, &self.private[domain], x)
    }

    /// Class logits from the two representations using the head serving `domain`.
    pub fn classify(&self, g: &mut Graph, b: &Binding, shared: Var, private: Var, domain: usize) -> Result<Var> {
        self.check_domain(domain)?;
        let head = if self.config.shared_classifier {
            self.heads[0]
        } else {
            self.heads[domain]
        };
        let joint = g.concat_cols(shared, private)?;
        Self::apply(g, b, head, joint)
    }

    pub fn discriminate(&self, g: &mut Graph, b: &Binding, shared: Var) -> Result<Var> {
        Self::apply(g, b, self.discriminator, shared)
    }

    pub fn forward(&self, g: &mut Graph, b: &Binding, x: Var, domain: usize) -> Result<ForwardOutput> {
        self.check_domain(domain)?;
        let shared = self.shared_features(g, b, x)?;
        let private = self.private_features(g, b, x, domain)?;
        let class_logits = self.classify(g, b, shared, private, domain)?;
        let class_probs = g.softmax_rows(class_logits);
        let domain_logits = self.discriminate(g, b, shared)?;
        Ok(ForwardOutput {
            shared,
            private,
            class_logits,
            class_probs,
            domain_logits,
        })
    }

    /// Class probabilities for a batch drawn from `domain`, without gradients.
    pub fn predict_proba(&self, x: &Matrix, domain: usize) -> Result<Matrix> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, |_| false);
        let xv = g.constant(x.clone());
        let out = self.forward(&mut g, &b, xv, domain)?;
        Ok(g.value(out.class_probs).clone())
    }

    /// Discriminator logits for a batch, without gradients.
    pub fn predict_domain_logits(&self, x: &Matrix) -> Result<Matrix> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, |_| false);
        let xv = g.constant(x.clone());
        let z = self.shared_features(&mut g, &b, xv)?;
        let logits = self.discriminate(&mut g, &b, z)?;
        Ok(g.value(logits).clone())
    }

    /// Snapshot of all parameter values in registry order.
    pub fn values(&self) -> Vec<Matrix> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn set_values(&mut self, values: Vec<Matrix>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter tensors, got {}",
                self.params.len(),
                values.len()
            )));
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::Shape {
                    op: "set_values",
                    left: p.value.shape(),
                    right: v.shape(),
                });
            }
            p.value = v;
        }
        Ok(())
    }
}

/// Copies the shared representation out of the graph so that losses built on
/// the copy never reach the shared extractor.
pub fn detach_shared(g: &mut Graph, output: &ForwardOutput) -> Var {
    g.detach(output.shared)
}
