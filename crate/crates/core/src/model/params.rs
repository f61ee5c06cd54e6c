use rand::Rng;

use super::{ModelConfig, ModelError};
use crate::autodiff::{ParamSet, Scalar, Tape, Tensor, Var};
use crate::data::{EmbeddingTable, PAD};

/// Positions of each tensor within [`Parameters`]; the order is fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Param {
    Embedding,
    FwdInput,
    FwdRecurrent,
    FwdBias,
    BwdInput,
    BwdRecurrent,
    BwdBias,
    ClusterW1,
    ClusterB1,
    ClusterW2,
    ClusterB2,
    ComposeW,
    ComposeB,
    GateW,
    GateB,
    ClassifierW1,
    ClassifierB1,
    ClassifierW2,
    ClassifierB2,
}

impl Param {
    pub const ALL: [Param; 19] = [
        Param::Embedding,
        Param::FwdInput,
        Param::FwdRecurrent,
        Param::FwdBias,
        Param::BwdInput,
        Param::BwdRecurrent,
        Param::BwdBias,
        Param::ClusterW1,
        Param::ClusterB1,
        Param::ClusterW2,
        Param::ClusterB2,
        Param::ComposeW,
        Param::ComposeB,
        Param::GateW,
        Param::GateB,
        Param::ClassifierW1,
        Param::ClassifierB1,
        Param::ClassifierW2,
        Param::ClassifierB2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Embedding => "embedding",
            Param::FwdInput => "lstm_fwd.w_ih",
            Param::FwdRecurrent => "lstm_fwd.w_hh",
            Param::FwdBias => "lstm_fwd.bias",
            Param::BwdInput => "lstm_bwd.w_ih",
            Param::BwdRecurrent => "lstm_bwd.w_hh",
            Param::BwdBias => "lstm_bwd.bias",
            Param::ClusterW1 => "cluster.w1",
            Param::ClusterB1 => "cluster.b1",
            Param::ClusterW2 => "cluster.w2",
            Param::ClusterB2 => "cluster.b2",
            Param::ComposeW => "compose.ws",
            Param::ComposeB => "compose.bs",
            Param::GateW => "gate.wg",
            Param::GateB => "gate.bg",
            Param::ClassifierW1 => "classifier.w1",
            Param::ClassifierB1 => "classifier.b1",
            Param::ClassifierW2 => "classifier.w2",
            Param::ClassifierB2 => "classifier.b2",
        }
    }

    pub fn shape(self, c: &ModelConfig) -> Vec<usize> {
        let gates = 4 * c.d_h;
        match self {
            Param::Embedding => vec![c.vocab_size, c.d_e],
            Param::FwdInput | Param::BwdInput => vec![gates, c.d_e],
            Param::FwdRecurrent | Param::BwdRecurrent => vec![gates, c.d_h],
            Param::FwdBias | Param::BwdBias => vec![gates],
            Param::ClusterW1 => vec![c.d_mlp, c.d_r()],
            Param::ClusterB1 => vec![c.d_mlp],
            Param::ClusterW2 => vec![c.m, c.d_mlp],
            Param::ClusterB2 => vec![c.m],
            Param::ComposeW => vec![c.d_c, c.d_r()],
            Param::ComposeB => vec![c.d_c],
            Param::GateW => vec![c.d_c, c.d_c],
            Param::GateB => vec![c.d_c],
            Param::ClassifierW1 => vec![c.d_cls, c.d_s()],
            Param::ClassifierB1 => vec![c.d_cls],
            Param::ClassifierW2 => vec![c.n_classes, c.d_cls],
            Param::ClassifierB2 => vec![c.n_classes],
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// All trainable tensors of the network, in [`Param::ALL`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<S: Scalar> {
    set: ParamSet<S>,
}

impl<S: Scalar> Parameters<S> {
    /// Glorot-uniform dense weights, zero biases except the LSTM forget gate
    /// (1.0), and a random embedding table with a zero PAD row.
    pub fn init<R: Rng>(config: &ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let emb = EmbeddingTable::random(config.vocab_size, config.d_e, rng);
        Self::init_with_embeddings(config, emb, rng)
    }

    pub fn init_with_embeddings<R: Rng>(
        config: &ModelConfig,
        embeddings: EmbeddingTable,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let mut set = ParamSet::new();
        for p in Param::ALL {
            let shape = p.shape(config);
            let tensor = match p {
                Param::Embedding => {
                    if embeddings.weights.shape() != shape.as_slice() {
                        return Err(ModelError::ParamShape {
                            name: p.name().to_string(),
                            expected: shape,
                            found: embeddings.weights.shape().to_vec(),
                        });
                    }
                    embeddings.weights.cast()
                }
                _ if shape.len() == 2 => glorot(&shape, rng),
                Param::FwdBias | Param::BwdBias => {
                    let mut b = vec![S::zero(); shape[0]];
                    b[config.d_h..2 * config.d_h].fill(S::one());
                    Tensor::new(shape, b).expect("bias shape")
                }
                _ => Tensor::zeros(&shape),
            };
            set.push(p.name(), tensor);
        }
        let mut params = Parameters { set };
        params.zero_pad_row();
        Ok(params)
    }

    /// Wraps an existing named set, checking names and shapes.
    pub fn from_set(config: &ModelConfig, set: ParamSet<S>) -> Result<Self, ModelError> {
        if set.len() != Param::ALL.len() {
            return Err(ModelError::ParamCount {
                expected: Param::ALL.len(),
                found: set.len(),
            });
        }
        for p in Param::ALL {
            let expected = p.shape(config);
            let ix = set
                .index_of(p.name())
                .ok_or_else(|| ModelError::MissingParam(p.name().into()))?;
            if ix != p.index() || set.tensor(ix).shape() != expected.as_slice() {
                return Err(ModelError::ParamShape {
                    name: p.name().to_string(),
                    expected,
                    found: set.tensor(ix).shape().to_vec(),
                });
            }
        }
        Ok(Parameters { set })
    }

    pub fn get(&self, p: Param) -> &Tensor<S> {
        self.set.tensor(p.index())
    }

    pub fn get_mut(&mut self, p: Param) -> &mut Tensor<S> {
        self.set.tensor_mut(p.index())
    }

    pub fn set(&self) -> &ParamSet<S> {
        &self.set
    }

    pub fn set_mut(&mut self) -> &mut ParamSet<S> {
        &mut self.set
    }

    pub fn into_set(self) -> ParamSet<S> {
        self.set
    }

    pub fn zero_pad_row(&mut self) {
        let emb = self.get_mut(Param::Embedding);
        let d = emb.shape()[1];
        emb.data_mut()[PAD * d..(PAD + 1) * d].fill(S::zero());
    }

    pub fn register<'a>(&'a self, tape: &mut Tape<'a, S>) -> ParamVars {
        ParamVars {
            vars: self.set.register(tape),
        }
    }

    pub fn cast<T: Scalar>(&self) -> Parameters<T> {
        Parameters { set: self.set.cast() }
    }

    pub fn all_finite(&self) -> bool {
        self.set.tensors().iter().all(Tensor::all_finite)
    }
}

fn glorot<S: Scalar, R: Rng>(shape: &[usize], rng: &mut R) -> Tensor<S> {
    let (fan_out, fan_in) = (shape[0], shape[1]);
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_out * fan_in)
        .map(|_| S::from_f64(rng.gen_range(-limit..=limit)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("glorot shape")
}

/// Tape handles for every parameter, indexed by [`Param`].
#[derive(Clone, Debug)]
pub struct ParamVars {
    vars: Vec<Var>,
}

impl ParamVars {
    pub fn from_vars(vars: Vec<Var>) -> Self {
        assert_eq!(vars.len(), Param::ALL.len());
        ParamVars { vars }
    }

    pub fn get(&self, p: Param) -> Var {
        self.vars[p.index()]
    }

    pub fn all(&self) -> &[Var] {
        &self.vars
    }
}

impl std::ops::Index<Param> for ParamVars {
    type Output = Var;

    fn index(&self, p: Param) -> &Var {
        &self.vars[p.index()]
    }
}
