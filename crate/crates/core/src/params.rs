//! Named parameter tensors, grouped for optimization and gradient checks.

use std::fmt;

use rand::Rng;

use crate::autograd::{Gradients, Tape, Var};
use crate::tensor::{Matrix, Real};

/// Which part of the model a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    Encoder,
    OverlapGate,
    SpanAttention,
    WidthEmbedding,
    MentionScorer,
    PairScorer,
    CoarseBilinear,
    RefinementGate,
    FeatureEmbeddings,
}

impl Component {
    pub const ALL: [Component; 9] = [
        Component::Encoder,
        Component::OverlapGate,
        Component::SpanAttention,
        Component::WidthEmbedding,
        Component::MentionScorer,
        Component::PairScorer,
        Component::CoarseBilinear,
        Component::RefinementGate,
        Component::FeatureEmbeddings,
    ];

    /// Encoder weights and the overlap gate train at the encoder rate;
    /// everything else at the task rate.
    pub fn group(self) -> ParamGroup {
        match self {
            Component::Encoder | Component::OverlapGate => ParamGroup::Encoder,
            _ => ParamGroup::Task,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::Encoder => "encoder",
            Component::OverlapGate => "overlap_gate",
            Component::SpanAttention => "span_attention",
            Component::WidthEmbedding => "width_embedding",
            Component::MentionScorer => "ffnn_mention",
            Component::PairScorer => "ffnn_pair",
            Component::CoarseBilinear => "coarse_bilinear",
            Component::RefinementGate => "refinement_gate",
            Component::FeatureEmbeddings => "feature_embeddings",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Encoder,
    Task,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub component: Component,
    pub value: Matrix,
}

/// Parameters in declaration order. The order is the checkpoint layout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, component: Component, value: Matrix) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            component,
            value,
        });
        ParamId(self.params.len() - 1)
    }

    /// Glorot-uniform initialized matrix.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        component: Component,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> ParamId {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
        self.add(name, component, Matrix::from_vec(rows, cols, data))
    }

    /// Uniform in `[-scale, scale)`.
    pub fn add_scaled<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        component: Component,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut R,
    ) -> ParamId {
        let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
        self.add(name, component, Matrix::from_vec(rows, cols, data))
    }

    pub fn add_filled(&mut self, name: impl Into<String>, component: Component, rows: usize, cols: usize, v: f64) -> ParamId {
        self.add(name, component, Matrix::filled(rows, cols, v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param)> {
        self.params.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }

    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads(
            self.params
                .iter()
                .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect(),
        )
    }

    /// Sets every parameter entry to `v`.
    pub fn fill(&mut self, v: f64) {
        for p in &mut self.params {
            p.value.data_mut().iter_mut().for_each(|x| *x = v);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }
}

/// One gradient matrix per parameter, aligned with [`ParamStore`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads(pub Vec<Matrix>);

impl ParamGrads {
    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.0[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.0[id.0]
    }

    pub fn global_norm(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|m| m.data())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for m in &mut self.0 {
            m.data_mut().iter_mut().for_each(|x| *x *= k);
        }
    }
}

/// Lazily materializes parameters as tape leaves, cast to the tape scalar.
pub struct Bound<'a, T: Real> {
    store: &'a ParamStore,
    vars: Vec<Option<Var>>,
    _marker: std::marker::PhantomData<T>,
}

impl<'a, T: Real> Bound<'a, T> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            store,
            vars: vec![None; store.len()],
            _marker: std::marker::PhantomData,
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn var(&mut self, tape: &mut Tape<T>, id: ParamId) -> Var {
        if let Some(v) = self.vars[id.0] {
            return v;
        }
        let v = tape.leaf(self.store.get(id).cast());
        self.vars[id.0] = Some(v);
        v
    }

    /// Collects leaf adjoints into store-aligned 64-bit gradients; parameters
    /// the output does not touch get zeros.
    pub fn gradients(&self, grads: &Gradients<T>) -> ParamGrads {
        let mut out = self.store.zero_grads();
        for (i, v) in self.vars.iter().enumerate() {
            if let Some(g) = v.and_then(|v| grads.get(v)) {
                out.0[i] = g.cast();
            }
        }
        out
    }
}
