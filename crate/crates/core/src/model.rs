//! Parameter layout shared by both tasks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoders::{EmbeddingTable, GruParams, CHAR_VOCAB_SIZE};
use crate::error::{Error, Result};
use crate::math::{ParamId, ParamSet, Tensor};

/// Half-width of the uniform weight initialization.
pub const INIT_SCALE: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub char_embed_dim: usize,
    pub hidden_dim: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            vocab_size: 10_000,
            embed_dim: 64,
            char_embed_dim: 16,
            hidden_dim: 64,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 3 {
            return Err(Error::Config("vocab_size must be at least 3".into()));
        }
        if self.embed_dim == 0 || self.char_embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("all dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Which task head a model is trained for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Retention,
    Selection,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Retention => "retention",
            Task::Selection => "selection",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retention" => Ok(Task::Retention),
            "selection" => Ok(Task::Selection),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

/// Order in which past-query encodings are fed to the context GRU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContextOrder {
    /// z₋₁, z₋₂, …, z₋P
    #[default]
    RecentFirst,
    /// z₋P, …, z₋₁
    Chronological,
}

/// Channels zeroed at constant capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ablation {
    pub disable_deficit: bool,
    pub disable_context: bool,
}

impl Ablation {
    pub const NONE: Ablation = Ablation {
        disable_deficit: false,
        disable_context: false,
    };

    pub fn last_query_only() -> Self {
        Ablation {
            disable_deficit: true,
            disable_context: true,
        }
    }
}

/// Parameter ids of every component.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub dims: ModelDims,
    pub embeddings: EmbeddingTable,
    pub enc_fwd: GruParams,
    pub enc_bwd: GruParams,
    pub url: GruParams,
    pub seq: GruParams,
    pub dec: GruParams,
    pub retention_w: ParamId,
    pub retention_b: ParamId,
    pub selection_w: ParamId,
    pub selection_b: ParamId,
}

/// All learnable weights plus the layout that names them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub layout: Layout,
    pub params: ParamSet,
}

impl Model {
    /// Uniform(−0.08, 0.08) weights, zero biases, zero padding rows.
    pub fn new(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let uniform = |shape: [usize; 2], rng: &mut ChaCha8Rng| {
            let values = (0..shape[0] * shape[1])
                .map(|_| rng.gen_range(-INIT_SCALE..INIT_SCALE))
                .collect();
            Tensor::new(shape, values).expect("positive dims")
        };

        let mut word = uniform([dims.vocab_size, dims.embed_dim], &mut rng);
        word.values_mut()[..dims.embed_dim].fill(0.0);
        let word = params.add("word_emb", word);
        let mut chars = uniform([CHAR_VOCAB_SIZE, dims.char_embed_dim], &mut rng);
        chars.values_mut()[..dims.char_embed_dim].fill(0.0);
        let chars = params.add("char_emb", chars);

        let h = dims.hidden_dim;
        let gru = |name: &str, input_dim: usize, rng: &mut ChaCha8Rng, params: &mut ParamSet| {
            let mut add_gate = |gate: &str, params: &mut ParamSet| {
                let w = params.add(format!("{name}.w_{gate}"), uniform([h, input_dim], rng));
                let u = params.add(format!("{name}.u_{gate}"), uniform([h, h], rng));
                let b = params.add(format!("{name}.b_{gate}"), Tensor::zeros([h]));
                (w, u, b)
            };
            let (w_z, u_z, b_z) = add_gate("z", params);
            let (w_r, u_r, b_r) = add_gate("r", params);
            let (w_h, u_h, b_h) = add_gate("h", params);
            GruParams {
                input_dim,
                hidden_dim: h,
                w_z,
                u_z,
                b_z,
                w_r,
                u_r,
                b_r,
                w_h,
                u_h,
                b_h,
            }
        };
        let enc_fwd = gru("gru_enc_fwd", dims.embed_dim, &mut rng, &mut params);
        let enc_bwd = gru("gru_enc_bwd", dims.embed_dim, &mut rng, &mut params);
        let url = gru("gru_url", dims.char_embed_dim, &mut rng, &mut params);
        let seq = gru("gru_seq", h, &mut rng, &mut params);
        let dec = gru("gru_dec", h, &mut rng, &mut params);

        let retention_w = params.add("retention.w", uniform([2, 3 * h], &mut rng));
        let retention_b = params.add("retention.b", Tensor::zeros([2]));
        let selection_w = params.add("selection.w", uniform([1, 3 * h], &mut rng));
        let selection_b = params.add("selection.b", Tensor::zeros([1]));

        Ok(Model {
            layout: Layout {
                dims,
                embeddings: EmbeddingTable { word, chars },
                enc_fwd,
                enc_bwd,
                url,
                seq,
                dec,
                retention_w,
                retention_b,
                selection_w,
                selection_b,
            },
            params,
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.layout.dims
    }

    /// Marks the tensors that receive gradients for `task` under `ablation`.
    /// Tensors feeding a zeroed channel or the other task's head are frozen.
    pub fn set_trainable(&mut self, task: Task, ablation: Ablation) {
        let l = &self.layout;
        let mut frozen: Vec<ParamId> = Vec::new();
        match task {
            Task::Retention => frozen.extend([l.selection_w, l.selection_b]),
            Task::Selection => frozen.extend([l.retention_w, l.retention_b]),
        }
        if ablation.disable_deficit {
            frozen.push(l.embeddings.chars);
            frozen.extend(l.url.ids());
        }
        if ablation.disable_context {
            frozen.extend(l.seq.ids());
        }
        for id in self.params.ids().collect::<Vec<_>>() {
            let t = self.params.get_mut(id);
            t.set_requires_grad(!frozen.contains(&id));
            t.clear_grad();
        }
    }

    /// Clears the padding-row gradient of both embedding tables.
    pub(crate) fn freeze_padding(&mut self) {
        for (id, width) in [
            (self.layout.embeddings.word, self.layout.dims.embed_dim),
            (
                self.layout.embeddings.chars,
                self.layout.dims.char_embed_dim,
            ),
        ] {
            if let Some(g) = self.params.get_mut(id).grad_mut() {
                g[..width].fill(0.0);
            }
        }
    }
}
