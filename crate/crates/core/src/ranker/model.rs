//! The feedforward ranker: embeddings, three projections, three ReLU hidden layers and a
//! two-way (correct / incorrect link) output, with manual backpropagation.

use rand::Rng;

use super::config::{RankerDims, TrainConfig};
use super::features::{MentionInput, MentionInputs, SparseVec};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Scalar};

pub const HIDDEN_LAYERS: usize = 3;

/// Output node order: index 0 is "correct link", index 1 "incorrect link".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Correct,
    Incorrect,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Correct => 0,
            Label::Incorrect => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weight: Matrix::zeros(out, inp),
            bias: vec![T::zero(); out],
        }
    }

    fn glorot(out: usize, inp: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: glorot(out, inp, rng),
            bias: vec![T::zero(); out],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.out_dim()];
        self.weight.matvec_into(x, &mut y);
        y.iter_mut().zip(&self.bias).for_each(|(v, &b)| *v += b);
        y
    }

    fn sgd(&mut self, lr: T, grad: &LayerGrad<T>) {
        self.weight.add_outer(-lr, &grad.output, &grad.input);
        for (b, &g) in self.bias.iter_mut().zip(&grad.output) {
            *b -= lr * g;
        }
    }
}

fn glorot<T: Scalar>(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<T> {
    let bound = TrainConfig::glorot_bound(cols, rows);
    Matrix::from_fn(rows, cols, |_, _| T::of(rng.random_range(-bound..=bound)))
}

/// Ranker parameters. `T` is `f32` for training and inference, `f64` for gradient checks.
#[derive(Debug, Clone, PartialEq)]
pub struct RankerModel<T> {
    pub dims: RankerDims,
    pub alphas: (f64, f64),
    pub dropout: f64,
    /// Maximum tokens of left and right context fed to the FOFE encoder.
    pub context_window: usize,
    pub word_embedding: Matrix<T>,
    pub char_embedding: Option<Matrix<T>>,
    pub mention_proj: Linear<T>,
    pub context_proj: Linear<T>,
    pub description_proj: Linear<T>,
    pub hidden: Vec<Linear<T>>,
    pub output: Linear<T>,
}

/// The concatenated, projected feature vector seen by the first hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    pub mention: Vec<T>,
    pub context: Vec<T>,
    pub description: Vec<T>,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn concatenated(&self) -> Vec<T> {
        let mut v =
            Vec::with_capacity(self.mention.len() + self.context.len() + self.description.len());
        v.extend_from_slice(&self.mention);
        v.extend_from_slice(&self.context);
        v.extend_from_slice(&self.description);
        v
    }

    pub fn all_finite(&self) -> bool {
        self.concatenated().iter().all(|v| v.is_finite())
    }
}

/// Intermediate values kept for backpropagation.
#[derive(Debug, Clone)]
pub struct EmbeddingCache<T> {
    mention_emb: Vec<T>,
    context_emb: Vec<T>,
    description_emb: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub logits: [T; 2],
    features: Vec<T>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<T>>,
    /// Post-ReLU, post-dropout outputs of each hidden layer.
    post: Vec<Vec<T>>,
    /// Inverted-dropout multipliers (0 or 1/(1-p)) when training.
    masks: Vec<Option<Vec<T>>>,
}

/// Gradient of one linear layer: the rank-one product `output ⊗ input` for the weights
/// and `output` for the bias.
#[derive(Debug, Clone)]
pub struct LayerGrad<T> {
    pub output: Vec<T>,
    pub input: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub mention_proj: LayerGrad<T>,
    pub context_proj: LayerGrad<T>,
    pub description_proj: LayerGrad<T>,
    pub hidden: Vec<LayerGrad<T>>,
    pub output: LayerGrad<T>,
    /// Sparse rows of the word embedding gradient.
    pub word_embedding: Vec<(usize, Vec<T>)>,
    pub char_embedding: Vec<(usize, Vec<T>)>,
}

fn embed_sparse<T: Scalar>(table: &Matrix<T>, sv: &SparseVec, out: &mut [T]) {
    for &(i, w) in sv {
        let w = T::of(w);
        for (o, &e) in out.iter_mut().zip(table.row(i)) {
            *o += w * e;
        }
    }
}

fn scatter_sparse<T: Scalar>(sv: &SparseVec, grad: &[T], rows: &mut Vec<(usize, Vec<T>)>) {
    for &(i, w) in sv {
        let w = T::of(w);
        rows.push((i, grad.iter().map(|&g| w * g).collect()));
    }
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of the two-way output against `label`.
pub fn pair_loss<T: Scalar>(logits: &[T; 2], label: Label) -> T {
    let max = logits[0].max(logits[1]);
    let lse = max + ((logits[0] - max).exp() + (logits[1] - max).exp()).ln();
    lse - logits[label.index()]
}

impl<T: Scalar> RankerModel<T> {
    /// Fresh model with Glorot-uniform weights and zero biases.
    pub fn init(dims: RankerDims, cfg: &TrainConfig, rng: &mut impl Rng) -> Self {
        let dims = dims.canonical();
        let word_embedding = glorot(dims.vocab, dims.word_dim, rng);
        let char_embedding = dims
            .char_mode()
            .then(|| glorot(dims.charset, dims.char_dim, rng));
        let mention_proj = Linear::glorot(dims.mention_dim, dims.mention_input(), rng);
        let context_proj = Linear::glorot(dims.context_dim, 4 * dims.word_dim, rng);
        let description_proj = Linear::glorot(dims.description_dim, dims.word_dim, rng);
        let mut hidden = Vec::with_capacity(HIDDEN_LAYERS);
        let mut width = dims.feature_width();
        for _ in 0..HIDDEN_LAYERS {
            hidden.push(Linear::glorot(dims.hidden, width, rng));
            width = dims.hidden;
        }
        let output = Linear::glorot(2, dims.hidden, rng);
        Self {
            dims,
            // stored at the precision of the model file so a reloaded model encodes identically
            alphas: (cfg.alphas.0 as f32 as f64, cfg.alphas.1 as f32 as f64),
            dropout: cfg.dropout as f32 as f64,
            context_window: cfg.context_window,
            word_embedding,
            char_embedding,
            mention_proj,
            context_proj,
            description_proj,
            hidden,
            output,
        }
    }

    /// All-zero model with the given shape and default hyperparameters.
    pub fn zeros(dims: RankerDims) -> Self {
        let cfg = TrainConfig::default();
        let dims = dims.canonical();
        let mut hidden = Vec::with_capacity(HIDDEN_LAYERS);
        let mut width = dims.feature_width();
        for _ in 0..HIDDEN_LAYERS {
            hidden.push(Linear::zeros(dims.hidden, width));
            width = dims.hidden;
        }
        Self {
            dims,
            alphas: cfg.alphas,
            dropout: cfg.dropout,
            context_window: cfg.context_window,
            word_embedding: Matrix::zeros(dims.vocab, dims.word_dim),
            char_embedding: dims
                .char_mode()
                .then(|| Matrix::zeros(dims.charset, dims.char_dim)),
            mention_proj: Linear::zeros(dims.mention_dim, dims.mention_input()),
            context_proj: Linear::zeros(dims.context_dim, 4 * dims.word_dim),
            description_proj: Linear::zeros(dims.description_dim, dims.word_dim),
            hidden,
            output: Linear::zeros(2, dims.hidden),
        }
    }

    pub fn cast<U: Scalar>(&self) -> RankerModel<U> {
        let lin = |l: &Linear<T>| Linear {
            weight: l.weight.cast(),
            bias: l.bias.iter().map(|&b| U::of(b.f64())).collect(),
        };
        RankerModel {
            dims: self.dims,
            alphas: self.alphas,
            dropout: self.dropout,
            context_window: self.context_window,
            word_embedding: self.word_embedding.cast(),
            char_embedding: self.char_embedding.as_ref().map(Matrix::cast),
            mention_proj: lin(&self.mention_proj),
            context_proj: lin(&self.context_proj),
            description_proj: lin(&self.description_proj),
            hidden: self.hidden.iter().map(lin).collect(),
            output: lin(&self.output),
        }
    }

    fn check_indices(&self, inputs: &MentionInputs, description: &SparseVec) -> Result<()> {
        let vocab = self.dims.vocab;
        let words_ok = |sv: &SparseVec| sv.iter().all(|&(i, _)| i < vocab);
        let ok = match &inputs.surface {
            MentionInput::Words(bow) => words_ok(bow),
            MentionInput::Chars { low, high } => {
                let c = self.dims.charset;
                self.dims.char_mode() && low.iter().chain(high).all(|&(i, _)| i < c)
            }
        };
        if !ok || !inputs.context.iter().all(words_ok) || !words_ok(description) {
            return Err(Error::Dimension(
                "input index outside the model's vocabulary (or wrong mention mode)".into(),
            ));
        }
        Ok(())
    }

    /// Embed and project the raw inputs into the concatenated feature vector.
    pub fn featurize(
        &self,
        inputs: &MentionInputs,
        description: &SparseVec,
    ) -> Result<(FeatureVector<T>, EmbeddingCache<T>)> {
        self.check_indices(inputs, description)?;
        let d = &self.dims;
        let mut mention_emb = vec![T::zero(); d.mention_input()];
        match (&inputs.surface, &self.char_embedding) {
            (MentionInput::Words(bow), _) => {
                embed_sparse(&self.word_embedding, bow, &mut mention_emb)
            }
            (MentionInput::Chars { low, high }, Some(chars)) => {
                let (a, b) = mention_emb.split_at_mut(d.char_dim);
                embed_sparse(chars, low, a);
                embed_sparse(chars, high, b);
            }
            (MentionInput::Chars { .. }, None) => unreachable!("checked above"),
        }
        let mut context_emb = vec![T::zero(); 4 * d.word_dim];
        for (code, chunk) in inputs
            .context
            .iter()
            .zip(context_emb.chunks_exact_mut(d.word_dim))
        {
            embed_sparse(&self.word_embedding, code, chunk);
        }
        let mut description_emb = vec![T::zero(); d.word_dim];
        embed_sparse(&self.word_embedding, description, &mut description_emb);

        let fv = FeatureVector {
            mention: self.mention_proj.apply(&mention_emb),
            context: self.context_proj.apply(&context_emb),
            description: self.description_proj.apply(&description_emb),
        };
        Ok((
            fv,
            EmbeddingCache {
                mention_emb,
                context_emb,
                description_emb,
            },
        ))
    }

    /// Hidden layers and output. Dropout runs only when `dropout_rng` is given.
    pub fn forward<R: Rng>(
        &self,
        fv: &FeatureVector<T>,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<ForwardCache<T>> {
        let features = fv.concatenated();
        if features.len() != self.dims.feature_width() {
            return Err(Error::Dimension(format!(
                "feature vector of {} for a model expecting {}",
                features.len(),
                self.dims.feature_width()
            )));
        }
        let keep = 1.0 - self.dropout;
        let mut pre = Vec::with_capacity(HIDDEN_LAYERS);
        let mut post = Vec::with_capacity(HIDDEN_LAYERS);
        let mut masks = Vec::with_capacity(HIDDEN_LAYERS);
        let mut x = features.clone();
        for layer in &self.hidden {
            let z = layer.apply(&x);
            let mut h: Vec<T> = z.iter().map(|&v| v.max(T::zero())).collect();
            let mask = match dropout_rng.as_deref_mut() {
                Some(rng) if self.dropout > 0.0 => {
                    let scale = T::of(1.0 / keep);
                    let m: Vec<T> = (0..h.len())
                        .map(|_| {
                            if rng.random::<f64>() < keep {
                                scale
                            } else {
                                T::zero()
                            }
                        })
                        .collect();
                    h.iter_mut().zip(&m).for_each(|(v, &s)| *v *= s);
                    Some(m)
                }
                _ => None,
            };
            pre.push(z);
            masks.push(mask);
            x = h.clone();
            post.push(h);
        }
        let out = self.output.apply(&x);
        let logits = [out[0], out[1]];
        if !logits.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence(
                "non-finite logits in forward pass".into(),
            ));
        }
        Ok(ForwardCache {
            logits,
            features,
            pre,
            post,
            masks,
        })
    }

    /// Correct-link and incorrect-link logits for one pair, without dropout.
    pub fn logits(&self, inputs: &MentionInputs, description: &SparseVec) -> Result<[T; 2]> {
        let (fv, _) = self.featurize(inputs, description)?;
        Ok(self.forward::<rand::rngs::ThreadRng>(&fv, None)?.logits)
    }

    /// Backpropagate the cross-entropy of `label` through every parameter.
    pub fn backward(
        &self,
        inputs: &MentionInputs,
        description: &SparseVec,
        emb: &EmbeddingCache<T>,
        cache: &ForwardCache<T>,
        label: Label,
    ) -> Gradients<T> {
        let d = &self.dims;
        let mut g_out = softmax(&cache.logits);
        g_out[label.index()] -= T::one();

        let last = cache.post.last().cloned().unwrap_or_default();
        let mut g = vec![T::zero(); last.len()];
        self.output.weight.matvec_t_acc(&g_out, &mut g);
        let output = LayerGrad {
            output: g_out,
            input: last,
        };

        let mut hidden: Vec<LayerGrad<T>> = Vec::with_capacity(HIDDEN_LAYERS);
        for l in (0..HIDDEN_LAYERS).rev() {
            if let Some(mask) = &cache.masks[l] {
                g.iter_mut().zip(mask).for_each(|(v, &m)| *v *= m);
            }
            for (v, &z) in g.iter_mut().zip(&cache.pre[l]) {
                if z <= T::zero() {
                    *v = T::zero();
                }
            }
            let input = if l == 0 {
                cache.features.clone()
            } else {
                cache.post[l - 1].clone()
            };
            let mut g_in = vec![T::zero(); input.len()];
            self.hidden[l].weight.matvec_t_acc(&g, &mut g_in);
            hidden.push(LayerGrad { output: g, input });
            g = g_in;
        }
        hidden.reverse();

        let (g_mention, rest) = g.split_at(d.mention_dim);
        let (g_context, g_description) = rest.split_at(d.context_dim);

        let mut word_embedding = Vec::new();
        let mut char_embedding = Vec::new();

        let mut g_memb = vec![T::zero(); d.mention_input()];
        self.mention_proj
            .weight
            .matvec_t_acc(g_mention, &mut g_memb);
        match &inputs.surface {
            MentionInput::Words(bow) => scatter_sparse(bow, &g_memb, &mut word_embedding),
            MentionInput::Chars { low, high } => {
                let (a, b) = g_memb.split_at(d.char_dim);
                scatter_sparse(low, a, &mut char_embedding);
                scatter_sparse(high, b, &mut char_embedding);
            }
        }

        let mut g_cemb = vec![T::zero(); 4 * d.word_dim];
        self.context_proj
            .weight
            .matvec_t_acc(g_context, &mut g_cemb);
        for (code, chunk) in inputs.context.iter().zip(g_cemb.chunks_exact(d.word_dim)) {
            scatter_sparse(code, chunk, &mut word_embedding);
        }

        let mut g_demb = vec![T::zero(); d.word_dim];
        self.description_proj
            .weight
            .matvec_t_acc(g_description, &mut g_demb);
        scatter_sparse(description, &g_demb, &mut word_embedding);

        Gradients {
            mention_proj: LayerGrad {
                output: g_mention.to_vec(),
                input: emb.mention_emb.clone(),
            },
            context_proj: LayerGrad {
                output: g_context.to_vec(),
                input: emb.context_emb.clone(),
            },
            description_proj: LayerGrad {
                output: g_description.to_vec(),
                input: emb.description_emb.clone(),
            },
            hidden,
            output,
            word_embedding,
            char_embedding,
        }
    }

    /// One plain SGD step.
    pub fn apply_sgd(&mut self, grads: &Gradients<T>, lr: T) {
        self.mention_proj.sgd(lr, &grads.mention_proj);
        self.context_proj.sgd(lr, &grads.context_proj);
        self.description_proj.sgd(lr, &grads.description_proj);
        for (layer, g) in self.hidden.iter_mut().zip(&grads.hidden) {
            layer.sgd(lr, g);
        }
        self.output.sgd(lr, &grads.output);
        for (row, g) in &grads.word_embedding {
            crate::tensor::axpy(-lr, g, self.word_embedding.row_mut(*row));
        }
        if let Some(chars) = &mut self.char_embedding {
            for (row, g) in &grads.char_embedding {
                crate::tensor::axpy(-lr, g, chars.row_mut(*row));
            }
        }
    }

    /// Named parameter tensors with their shapes, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mat = |m: &Matrix<T>| vec![m.rows(), m.cols()];
        let mut out: Vec<(String, Vec<usize>, &[T])> = vec![(
            "word_embedding".into(),
            mat(&self.word_embedding),
            self.word_embedding.as_slice(),
        )];
        if let Some(c) = &self.char_embedding {
            out.push(("char_embedding".into(), mat(c), c.as_slice()));
        }
        for (name, l) in self.linear_layers() {
            out.push((
                format!("{name}.weight"),
                mat(&l.weight),
                l.weight.as_slice(),
            ));
            out.push((format!("{name}.bias"), vec![l.bias.len()], &l.bias));
        }
        out
    }

    fn linear_layers(&self) -> Vec<(String, &Linear<T>)> {
        let mut v = vec![
            ("mention_proj".to_string(), &self.mention_proj),
            ("context_proj".to_string(), &self.context_proj),
            ("description_proj".to_string(), &self.description_proj),
        ];
        for (i, h) in self.hidden.iter().enumerate() {
            v.push((format!("hidden.{i}"), h));
        }
        v.push(("output".to_string(), &self.output));
        v
    }

    /// Mutable views of every parameter, same order as [`tensors`](Self::tensors).
    pub fn params_mut(&mut self) -> Vec<(String, &mut [T])> {
        let RankerModel {
            word_embedding,
            char_embedding,
            mention_proj,
            context_proj,
            description_proj,
            hidden,
            output,
            ..
        } = self;
        let mut out: Vec<(String, &mut [T])> =
            vec![("word_embedding".into(), word_embedding.as_mut_slice())];
        if let Some(c) = char_embedding {
            out.push(("char_embedding".into(), c.as_mut_slice()));
        }
        let mut layers: Vec<(String, &mut Linear<T>)> = vec![
            ("mention_proj".into(), mention_proj),
            ("context_proj".into(), context_proj),
            ("description_proj".into(), description_proj),
        ];
        for (i, h) in hidden.iter_mut().enumerate() {
            layers.push((format!("hidden.{i}"), h));
        }
        layers.push(("output".into(), output));
        for (name, l) in layers {
            out.push((format!("{name}.weight"), l.weight.as_mut_slice()));
            out.push((format!("{name}.bias"), l.bias.as_mut_slice()));
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, v)| v.iter().all(|x| x.is_finite()))
    }
}

impl<T: Scalar> Gradients<T> {
    /// Euclidean norm over every parameter gradient.
    pub fn norm(&self) -> f64 {
        let sq = |v: &[T]| {
            v.iter()
                .map(|&x| x.to_f64().unwrap_or(f64::INFINITY).powi(2))
                .sum::<f64>()
        };
        let mut total = 0.0;
        for g in [
            &self.mention_proj,
            &self.context_proj,
            &self.description_proj,
            &self.output,
        ]
        .into_iter()
        .chain(&self.hidden)
        {
            total += sq(&g.output) * (sq(&g.input) + 1.0);
        }
        for sparse in [&self.word_embedding, &self.char_embedding] {
            let mut rows: std::collections::BTreeMap<usize, Vec<f64>> =
                std::collections::BTreeMap::new();
            for (r, g) in sparse {
                let row = rows.entry(*r).or_insert_with(|| vec![0.0; g.len()]);
                for (a, &b) in row.iter_mut().zip(g) {
                    *a += b.to_f64().unwrap_or(f64::INFINITY);
                }
            }
            total += rows.values().flatten().map(|x| x * x).sum::<f64>();
        }
        total.sqrt()
    }

    /// Dense gradients in the order of [`RankerModel::tensors`].
    pub fn dense(&self, model: &RankerModel<T>) -> Vec<(String, Vec<T>)> {
        let d = &model.dims;
        let mut out = Vec::new();
        let rows = |n: usize, cols: usize, sparse: &[(usize, Vec<T>)]| {
            let mut m = vec![T::zero(); n * cols];
            for (r, g) in sparse {
                crate::tensor::axpy(T::one(), g, &mut m[r * cols..(r + 1) * cols]);
            }
            m
        };
        out.push((
            "word_embedding".to_string(),
            rows(d.vocab, d.word_dim, &self.word_embedding),
        ));
        if d.char_mode() {
            out.push((
                "char_embedding".to_string(),
                rows(d.charset, d.char_dim, &self.char_embedding),
            ));
        }
        let mut layers = vec![
            ("mention_proj".to_string(), &self.mention_proj),
            ("context_proj".to_string(), &self.context_proj),
            ("description_proj".to_string(), &self.description_proj),
        ];
        for (i, h) in self.hidden.iter().enumerate() {
            layers.push((format!("hidden.{i}"), h));
        }
        layers.push(("output".to_string(), &self.output));
        for (name, g) in layers {
            let mut w = Matrix::<T>::zeros(g.output.len(), g.input.len());
            w.add_outer(T::one(), &g.output, &g.input);
            out.push((format!("{name}.weight"), w.as_slice().to_vec()));
            out.push((format!("{name}.bias"), g.output.clone()));
        }
        out
    }
}
