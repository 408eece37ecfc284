//! Gated graph-attention blocks and the two complex-level models.
//!
//! [`ModelKind::Gnnf`] runs one shared block stack twice over the joined
//! protein+ligand graph, once with interaction edges and once without,
//! and reads out the ligand rows of the difference. [`ModelKind::Gnnp`]
//! runs independent ligand and protein towers and concatenates their
//! pooled outputs.
//!
//! In the joined graph protein atoms come first, ligand atoms after.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complexbuild::ComplexGraph;
use crate::featurize::{LIGAND_FEATURES, PROTEIN_FEATURES};
use crate::scalar::Scalar;
use crate::tensor::{sigmoid, Tape, Tensor, TensorError, Var};

/// Lower bound on the learnable interaction width.
pub const MIN_SIGMA: f64 = 0.1;
/// Logits beyond this magnitude map to a saturated probability.
pub const LOGIT_CLAMP: f64 = 40.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{what}: expected {expected} feature columns, got {got}")]
    FeatureWidth {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid model configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gnnf,
    Gnnp,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gnnf => "gnnf",
            ModelKind::Gnnp => "gnnp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gnnf" => Some(ModelKind::Gnnf),
            "gnnp" => Some(ModelKind::Gnnp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Raw logit; probabilities via the logistic function.
    Cls,
    /// Non-negative value through a final relu.
    Reg,
}

impl HeadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Cls => "cls",
            HeadKind::Reg => "reg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cls" | "classification" => Some(HeadKind::Cls),
            "reg" | "regression" => Some(HeadKind::Reg),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: ModelKind,
    pub head: HeadKind,
    pub dim: usize,
    pub n_blocks: usize,
    /// Hidden widths of the readout MLP; a final width-1 layer is implied.
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Gnnf,
            head: HeadKind::Cls,
            dim: 70,
            n_blocks: 2,
            hidden: vec![128, 64],
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dim == 0 {
            return Err(ModelError::Config("dim must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(ModelError::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }

    fn readout_width(&self) -> usize {
        match self.model {
            ModelKind::Gnnf => self.dim,
            ModelKind::Gnnp => 2 * self.dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatBlock<P> {
    pub w_t: P,
    pub w_a: P,
    pub u: P,
    pub b: P,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<P> {
    pub w: P,
    pub b: P,
}

/// Model parameters, generic over the slot type so the same layout holds
/// tensors, tape handles, or optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params<P> {
    pub embed_ligand: P,
    pub embed_protein: P,
    /// The shared stack for gnnf; the ligand tower for gnnp.
    pub blocks: Vec<GatBlock<P>>,
    /// The protein tower for gnnp; empty for gnnf.
    pub protein_blocks: Vec<GatBlock<P>>,
    pub mu: P,
    pub sigma: P,
    pub mlp: Vec<Dense<P>>,
}

impl<P> Params<P> {
    /// Slots paired with stable dotted names, in a fixed order.
    pub fn named(&self) -> Vec<(String, &P)> {
        let mut out = vec![
            ("embed_ligand".to_string(), &self.embed_ligand),
            ("embed_protein".to_string(), &self.embed_protein),
        ];
        for (tower, blocks) in [
            ("blocks", &self.blocks),
            ("protein_blocks", &self.protein_blocks),
        ] {
            for (k, b) in blocks.iter().enumerate() {
                out.push((format!("{tower}.{k}.w_t"), &b.w_t));
                out.push((format!("{tower}.{k}.w_a"), &b.w_a));
                out.push((format!("{tower}.{k}.u"), &b.u));
                out.push((format!("{tower}.{k}.b"), &b.b));
            }
        }
        out.push(("mu".to_string(), &self.mu));
        out.push(("sigma".to_string(), &self.sigma));
        for (k, d) in self.mlp.iter().enumerate() {
            out.push((format!("mlp.{k}.w"), &d.w));
            out.push((format!("mlp.{k}.b"), &d.b));
        }
        out
    }

    /// Mutable slots in the order of [`Params::named`].
    pub fn slots_mut(&mut self) -> Vec<&mut P> {
        let mut out = vec![&mut self.embed_ligand, &mut self.embed_protein];
        for b in self.blocks.iter_mut().chain(self.protein_blocks.iter_mut()) {
            out.extend([&mut b.w_t, &mut b.w_a, &mut b.u, &mut b.b]);
        }
        out.push(&mut self.mu);
        out.push(&mut self.sigma);
        for d in &mut self.mlp {
            out.extend([&mut d.w, &mut d.b]);
        }
        out
    }

    pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> Params<Q> {
        let mut block = |b: &GatBlock<P>| GatBlock {
            w_t: f(&b.w_t),
            w_a: f(&b.w_a),
            u: f(&b.u),
            b: f(&b.b),
        };
        let blocks = self.blocks.iter().map(&mut block).collect();
        let protein_blocks = self.protein_blocks.iter().map(&mut block).collect();
        Params {
            embed_ligand: f(&self.embed_ligand),
            embed_protein: f(&self.embed_protein),
            blocks,
            protein_blocks,
            mu: f(&self.mu),
            sigma: f(&self.sigma),
            mlp: self
                .mlp
                .iter()
                .map(|d| Dense {
                    w: f(&d.w),
                    b: f(&d.b),
                })
                .collect(),
        }
    }

    /// Rebuilds a layout from slots in [`Params::named`] order.
    pub fn from_slots(template: &Params<impl Sized>, slots: Vec<P>) -> Option<Self> {
        let expected = template.named().len();
        if slots.len() != expected {
            return None;
        }
        let mut it = slots.into_iter();
        let mut next = || it.next().expect("slot count checked");
        let embed_ligand = next();
        let embed_protein = next();
        let mut take_blocks = |n: usize| {
            (0..n)
                .map(|_| GatBlock {
                    w_t: next(),
                    w_a: next(),
                    u: next(),
                    b: next(),
                })
                .collect::<Vec<_>>()
        };
        let blocks = take_blocks(template.blocks.len());
        let protein_blocks = take_blocks(template.protein_blocks.len());
        let mu = next();
        let sigma = next();
        let mlp = (0..template.mlp.len())
            .map(|_| Dense {
                w: next(),
                b: next(),
            })
            .collect();
        Some(Params {
            embed_ligand,
            embed_protein,
            blocks,
            protein_blocks,
            mu,
            sigma,
            mlp,
        })
    }
}

/// A configured model and its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: Params<Tensor<T>>,
}

fn xavier<T: Scalar>(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(fan_in, fan_out, |_, _| T::of(rng.gen_range(-a..=a)))
}

impl<T: Scalar> Model<T> {
    /// Xavier-uniform weights, zero biases, mu = 4, sigma = 1.
    ///
    /// For the regression head the last bias starts at `label_mean`.
    pub fn init(config: ModelConfig, seed: u64, label_mean: f64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.dim;
        let embed_ligand = xavier(&mut rng, LIGAND_FEATURES, d);
        let embed_protein = xavier(&mut rng, PROTEIN_FEATURES, d);
        let stack = |rng: &mut ChaCha8Rng| {
            (0..config.n_blocks)
                .map(|_| GatBlock {
                    w_t: xavier(rng, d, d),
                    w_a: xavier(rng, d, d),
                    u: xavier(rng, 2 * d, 1),
                    b: Tensor::zeros(1, 1),
                })
                .collect::<Vec<_>>()
        };
        let blocks = stack(&mut rng);
        let protein_blocks = match config.model {
            ModelKind::Gnnf => Vec::new(),
            ModelKind::Gnnp => stack(&mut rng),
        };
        let mut widths = vec![config.readout_width()];
        widths.extend(&config.hidden);
        widths.push(1);
        let mut mlp: Vec<Dense<Tensor<T>>> = widths
            .windows(2)
            .map(|w| Dense {
                w: xavier(&mut rng, w[0], w[1]),
                b: Tensor::zeros(1, w[1]),
            })
            .collect();
        if config.head == HeadKind::Reg {
            let last = mlp.last_mut().expect("mlp has an output layer");
            last.b = Tensor::scalar(T::of(label_mean));
        }
        Ok(Self {
            config,
            params: Params {
                embed_ligand,
                embed_protein,
                blocks,
                protein_blocks,
                mu: Tensor::scalar(T::of(4.0)),
                sigma: Tensor::scalar(T::of(1.0)),
                mlp,
            },
        })
    }

    /// Clamps sigma to at least [`MIN_SIGMA`]; call after every update.
    pub fn apply_constraints(&mut self) {
        let s = &mut self.params.sigma;
        let v = s.item().max(T::of(MIN_SIGMA));
        s.set(0, 0, v);
    }

    pub fn parameter_count(&self) -> usize {
        self.params.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Records every parameter on `tape`, tracked when `track` is set.
    pub fn bind<'t>(&self, tape: &'t Tape<T>, track: bool) -> Params<Var<'t, T>> {
        self.params.map(|t| {
            if track {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        })
    }

    /// Raw head output for one complex: a logit (cls) or a value (reg).
    pub fn score(&self, graph: &ComplexGraph) -> Result<T, ModelError> {
        let tape = Tape::new();
        let p = self.bind(&tape, false);
        Ok(forward(&tape, &self.config, &p, graph)?.value().item())
    }

    /// Probability (cls) or predicted value (reg), as f64.
    pub fn predict(&self, graph: &ComplexGraph) -> Result<f64, ModelError> {
        Ok(head_output(self.config.head, self.score(graph)?.as_f64()))
    }
}

/// Maps a raw score to the reported prediction.
pub fn head_output(head: HeadKind, score: f64) -> f64 {
    match head {
        HeadKind::Cls => sigmoid(score.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)),
        HeadKind::Reg => score.max(0.0),
    }
}

/// Weighted adjacency plus the structural mask the attention softmax uses.
#[derive(Debug, Clone, Copy)]
pub struct GraphView<'t, 'm, T> {
    pub adj: Var<'t, T>,
    pub mask: &'m [bool],
}

/// One gated attention block.
///
/// `z = hW_t`, pair scores `z_iᵀW_a z_j + z_jᵀW_a z_i` normalized over each
/// row's neighbors and scaled by edge weight, `h'' = relu(a z)`, gate
/// `g = sigmoid([h | h'']U + b)`, output `g h + (1 - g) h''`.
pub fn gat_block<'t, T: Scalar>(
    tape: &'t Tape<T>,
    h: Var<'t, T>,
    graph: GraphView<'t, '_, T>,
    p: &GatBlock<Var<'t, T>>,
) -> Result<Var<'t, T>, TensorError> {
    let (n, d) = h.shape();
    let z = h.matmul(p.w_t)?;
    let e = z.matmul(p.w_a)?.matmul(z.transpose()?)?;
    let e = e.add(e.transpose()?)?;
    let a = e.masked_row_softmax(graph.mask)?.mul(graph.adj)?;
    let h2 = a.matmul(z)?.relu()?;
    let ones_n = tape.constant(Tensor::ones(n, 1));
    let gate = h
        .concat_cols(h2)?
        .matmul(p.u)?
        .add(ones_n.matmul(p.b)?)?
        .sigmoid()?;
    let g = gate.matmul(tape.constant(Tensor::ones(1, d)))?;
    let keep = g.neg()?.add_scalar(T::one())?;
    g.mul(h)?.add(keep.mul(h2)?)
}

fn stack<'t, T: Scalar>(
    tape: &'t Tape<T>,
    mut h: Var<'t, T>,
    graph: GraphView<'t, '_, T>,
    blocks: &[GatBlock<Var<'t, T>>],
) -> Result<Var<'t, T>, TensorError> {
    for b in blocks {
        h = gat_block(tape, h, graph, b)?;
    }
    Ok(h)
}

fn structural_mask(adj: &Tensor<f64>) -> Vec<bool> {
    adj.data().iter().map(|&v| v > 0.0).collect()
}

fn check_widths(graph: &ComplexGraph) -> Result<(), ModelError> {
    if graph.ligand_features.cols() != LIGAND_FEATURES {
        return Err(ModelError::FeatureWidth {
            what: "ligand",
            expected: LIGAND_FEATURES,
            got: graph.ligand_features.cols(),
        });
    }
    if graph.protein_features.cols() != PROTEIN_FEATURES {
        return Err(ModelError::FeatureWidth {
            what: "protein",
            expected: PROTEIN_FEATURES,
            got: graph.protein_features.cols(),
        });
    }
    Ok(())
}

/// Interaction edge weights `exp(-(d - mu)^2 / sigma)`, Kx1.
pub fn interaction_weights<'t, T: Scalar>(
    tape: &'t Tape<T>,
    distances: &[f64],
    mu: Var<'t, T>,
    sigma: Var<'t, T>,
) -> Result<Var<'t, T>, TensorError> {
    let k = distances.len();
    let d = tape.constant(Tensor::from_fn(k, 1, |i, _| T::of(distances[i])));
    let ones = tape.constant(Tensor::ones(k, 1));
    let diff = d.sub(ones.matmul(mu)?)?;
    diff.mul(diff)?.div(ones.matmul(sigma)?)?.neg()?.exp()
}

/// The head output variable (1x1) for one complex.
pub fn forward<'t, T: Scalar>(
    tape: &'t Tape<T>,
    config: &ModelConfig,
    p: &Params<Var<'t, T>>,
    graph: &ComplexGraph,
) -> Result<Var<'t, T>, ModelError> {
    check_widths(graph)?;
    let readout = match config.model {
        ModelKind::Gnnf => readout_gnnf(tape, p, graph)?,
        ModelKind::Gnnp => readout_gnnp(tape, p, graph)?,
    };
    let mut x = readout;
    for (k, layer) in p.mlp.iter().enumerate() {
        x = x.matmul(layer.w)?.add(layer.b)?;
        if k + 1 < p.mlp.len() {
            x = x.relu()?;
        }
    }
    if config.head == HeadKind::Reg {
        x = x.relu()?;
    }
    Ok(x)
}

fn readout_gnnf<'t, T: Scalar>(
    tape: &'t Tape<T>,
    p: &Params<Var<'t, T>>,
    graph: &ComplexGraph,
) -> Result<Var<'t, T>, TensorError> {
    let (np, n) = (graph.n_protein(), graph.n_nodes());
    let xp = tape
        .constant(graph.protein_features.cast())
        .matmul(p.embed_protein)?;
    let xl = tape
        .constant(graph.ligand_features.cast())
        .matmul(p.embed_ligand)?;
    let x = xp.concat_rows(xl)?;

    let a1_t = graph.covalent_adj();
    let mask1 = structural_mask(&a1_t);
    let a1 = tape.constant(a1_t.cast());

    let (a2, mask2) = if graph.interactions.is_empty() {
        (a1, mask1.clone())
    } else {
        let distances: Vec<f64> = graph.interactions.iter().map(|i| i.distance).collect();
        let w = interaction_weights(tape, &distances, p.mu, p.sigma)?;
        let both = w.concat_rows(w)?;
        let forward: Vec<(usize, usize)> = graph
            .interactions
            .iter()
            .map(|i| (i.protein, np + i.ligand))
            .collect();
        let positions: Vec<(usize, usize)> = forward
            .iter()
            .copied()
            .chain(forward.iter().map(|&(i, j)| (j, i)))
            .collect();
        let mut mask = mask1.clone();
        for &(i, j) in &positions {
            mask[i * n + j] = true;
        }
        (a1.add(both.scatter(&positions, (n, n))?)?, mask)
    };

    let h2 = stack(
        tape,
        x,
        GraphView {
            adj: a2,
            mask: &mask2,
        },
        &p.blocks,
    )?;
    let h1 = stack(
        tape,
        x,
        GraphView {
            adj: a1,
            mask: &mask1,
        },
        &p.blocks,
    )?;
    h2.sub(h1)?.row_slice(np, n)?.col_sum()
}

fn readout_gnnp<'t, T: Scalar>(
    tape: &'t Tape<T>,
    p: &Params<Var<'t, T>>,
    graph: &ComplexGraph,
) -> Result<Var<'t, T>, TensorError> {
    let tower = |features: &Tensor<f64>, embed, adj: &Tensor<f64>, blocks| {
        let mask = structural_mask(adj);
        let x = tape.constant(features.cast()).matmul(embed)?;
        let a = tape.constant(adj.cast());
        stack(
            tape,
            x,
            GraphView {
                adj: a,
                mask: &mask,
            },
            blocks,
        )?
        .col_sum()
    };
    let rl = tower(
        &graph.ligand_features,
        p.embed_ligand,
        &graph.ligand_adj,
        &p.blocks,
    )?;
    let rp = tower(
        &graph.protein_features,
        p.embed_protein,
        &graph.protein_adj,
        &p.protein_blocks,
    )?;
    rl.concat_cols(rp)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::synthetic::{SyntheticComplex, SyntheticConfig};

    fn small(model: ModelKind, head: HeadKind) -> ModelConfig {
        ModelConfig {
            model,
            head,
            dim: 4,
            n_blocks: 2,
            hidden: vec![5, 3],
        }
    }

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::new(rows, cols, v.to_vec()).unwrap()
    }

    /// Naive per-entry evaluation of one block.
    fn block_oracle(
        h: &Tensor<f64>,
        adj: &Tensor<f64>,
        mask: &[bool],
        p: &GatBlock<Tensor<f64>>,
    ) -> Tensor<f64> {
        let (n, d) = h.shape();
        let z = h.matmul(&p.w_t).unwrap();
        let mut e = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        s += z.get(i, a) * p.w_a.get(a, b) * z.get(j, b)
                            + z.get(j, a) * p.w_a.get(a, b) * z.get(i, b);
                    }
                }
                e[i][j] = s;
            }
        }
        let mut out = Tensor::zeros(n, d);
        for i in 0..n {
            let nbrs: Vec<usize> = (0..n).filter(|&j| mask[i * n + j]).collect();
            let mx = nbrs
                .iter()
                .map(|&j| e[i][j])
                .fold(f64::NEG_INFINITY, f64::max);
            let tot: f64 = nbrs.iter().map(|&j| (e[i][j] - mx).exp()).sum();
            let mut h2 = vec![0.0; d];
            for &j in &nbrs {
                let a = (e[i][j] - mx).exp() / tot * adj.get(i, j);
                for c in 0..d {
                    h2[c] += a * z.get(j, c);
                }
            }
            for v in &mut h2 {
                *v = v.max(0.0);
            }
            let mut logit = p.b.item();
            for c in 0..d {
                logit += h.get(i, c) * p.u.get(c, 0) + h2[c] * p.u.get(d + c, 0);
            }
            let g = 1.0 / (1.0 + (-logit).exp());
            for c in 0..d {
                out.set(i, c, g * h.get(i, c) + (1.0 - g) * h2[c]);
            }
        }
        out
    }

    fn run_block(h: &Tensor<f64>, adj: &Tensor<f64>, p: &GatBlock<Tensor<f64>>) -> Tensor<f64> {
        let tape = Tape::new();
        let mask = structural_mask(adj);
        let pv = GatBlock {
            w_t: tape.constant(p.w_t.clone()),
            w_a: tape.constant(p.w_a.clone()),
            u: tape.constant(p.u.clone()),
            b: tape.constant(p.b.clone()),
        };
        let a = tape.constant(adj.clone());
        gat_block(
            &tape,
            tape.constant(h.clone()),
            GraphView {
                adj: a,
                mask: &mask,
            },
            &pv,
        )
        .unwrap()
        .value()
    }

    #[test]
    fn symmetric_score_of_two_unit_nodes() {
        // z = [1, 0] and [0, 1], W_a = ones gives e_01 = 1 + 1 = 2.
        let h = Tensor::<f64>::identity(2);
        let p = GatBlock {
            w_t: Tensor::identity(2),
            w_a: Tensor::ones(2, 2),
            u: Tensor::zeros(4, 1),
            b: Tensor::zeros(1, 1),
        };
        let z = h.matmul(&p.w_t).unwrap();
        let e = z.matmul(&p.w_a).unwrap().matmul(&z.transpose()).unwrap();
        let e = Tensor::from_fn(2, 2, |i, j| e.get(i, j) + e.get(j, i));
        assert_eq!(e.get(0, 1), 2.0);
        assert_eq!(e.get(1, 0), 2.0);
    }

    #[test]
    fn single_node_zero_gate_is_midpoint() {
        // one node, no edges: h'' = 0 and g = 0.5, so h' = h/2
        let h = t(1, 2, &[0.8, -0.4]);
        let p = GatBlock {
            w_t: Tensor::identity(2),
            w_a: Tensor::identity(2),
            u: Tensor::zeros(4, 1),
            b: Tensor::zeros(1, 1),
        };
        let out = run_block(&h, &Tensor::zeros(1, 1), &p);
        assert_eq!(out.data(), &[0.4, -0.2]);
    }

    #[test]
    fn block_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let n = 2 + trial % 5;
            let d = 3;
            let mut r = |rows, cols| Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
            let h = r(n, d);
            let p = GatBlock {
                w_t: r(d, d),
                w_a: r(d, d),
                u: r(2 * d, 1),
                b: r(1, 1),
            };
            let mut adj = Tensor::zeros(n, n);
            for i in 0..n {
                for j in i + 1..n {
                    let w: f64 = rng.gen_range(0.0..1.0);
                    if w > 0.4 {
                        adj.set(i, j, w);
                        adj.set(j, i, w);
                    }
                }
            }
            let got = run_block(&h, &adj, &p);
            let want = block_oracle(&h, &adj, &structural_mask(&adj), &p);
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn gate_stays_in_open_interval() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(t(1, 3, &[-30.0, 0.0, 30.0]));
        let g = x.sigmoid().unwrap().value();
        assert!(g.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn no_interactions_means_zero_readout() {
        let syn = SyntheticConfig::default();
        let g = SyntheticComplex::generate(&syn, 2, false).graph;
        let model = Model::<f64>::init(small(ModelKind::Gnnf, HeadKind::Cls), 1, 0.0).unwrap();
        let tape = Tape::new();
        let p = model.bind(&tape, false);
        let r = readout_gnnf(&tape, &p, &g).unwrap().value();
        assert!(r.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn interactions_change_the_readout() {
        let syn = SyntheticConfig::default();
        let g = SyntheticComplex::generate(&syn, 2, true).graph;
        let model = Model::<f64>::init(small(ModelKind::Gnnf, HeadKind::Cls), 1, 0.0).unwrap();
        let tape = Tape::new();
        let p = model.bind(&tape, false);
        let r = readout_gnnf(&tape, &p, &g).unwrap().value();
        assert!(r.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn interaction_weight_peaks_at_mu() {
        let tape = Tape::<f64>::new();
        let mu = tape.constant(Tensor::scalar(4.0));
        let sigma = tape.constant(Tensor::scalar(1.0));
        let w = interaction_weights(&tape, &[4.0, 3.0, 5.0, 2.0], mu, sigma)
            .unwrap()
            .value();
        assert_eq!(w.get(0, 0), 1.0);
        assert!((w.get(1, 0) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(w.get(1, 0), w.get(2, 0));
        assert!((w.get(3, 0) - (-4.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn init_layout_and_regression_bias() {
        let cfg = small(ModelKind::Gnnp, HeadKind::Reg);
        let m = Model::<f64>::init(cfg, 0, 6.5).unwrap();
        assert_eq!(m.params.blocks.len(), 2);
        assert_eq!(m.params.protein_blocks.len(), 2);
        assert_eq!(m.params.mlp[0].w.shape(), (8, 5));
        assert_eq!(m.params.mlp.last().unwrap().b.item(), 6.5);
        assert_eq!(m.params.blocks[0].b.item(), 0.0);
        let a = (6.0f64 / (41.0 + 4.0)).sqrt();
        assert!(m.params.embed_ligand.data().iter().all(|v| v.abs() <= a));
        let names: Vec<String> = m.params.named().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "embed_ligand");
        assert!(names.contains(&"protein_blocks.1.u".to_string()));
        let f = Model::<f64>::init(small(ModelKind::Gnnf, HeadKind::Cls), 0, 6.5).unwrap();
        assert!(f.params.protein_blocks.is_empty());
        assert_eq!(f.params.mlp.last().unwrap().b.item(), 0.0);
    }

    #[test]
    fn slots_round_trip_through_layout() {
        let m = Model::<f64>::init(small(ModelKind::Gnnp, HeadKind::Cls), 9, 0.0).unwrap();
        let slots: Vec<Tensor<f64>> = m
            .params
            .named()
            .into_iter()
            .map(|(_, t)| t.clone())
            .collect();
        let back = Params::from_slots(&m.params, slots).unwrap();
        assert_eq!(back, m.params);
        assert!(Params::<Tensor<f64>>::from_slots(&m.params, vec![]).is_none());
    }

    #[test]
    fn sigma_is_clamped() {
        let mut m = Model::<f64>::init(small(ModelKind::Gnnf, HeadKind::Cls), 0, 0.0).unwrap();
        m.params.sigma = Tensor::scalar(-2.0);
        m.apply_constraints();
        assert_eq!(m.params.sigma.item(), MIN_SIGMA);
    }

    #[test]
    fn head_outputs() {
        assert_eq!(head_output(HeadKind::Cls, 0.0), 0.5);
        assert_eq!(head_output(HeadKind::Cls, 1e6), sigmoid(40.0));
        assert!(head_output(HeadKind::Cls, -1e6) > 0.0);
        assert_eq!(head_output(HeadKind::Reg, -3.0), 0.0);
        assert_eq!(head_output(HeadKind::Reg, 2.5), 2.5);
    }

    #[test]
    fn regression_head_is_non_negative() {
        let syn = SyntheticConfig::default();
        let m = Model::<f64>::init(small(ModelKind::Gnnf, HeadKind::Reg), 4, -10.0).unwrap();
        for k in 0..5 {
            let g = SyntheticComplex::generate(&syn, k, true).graph;
            assert_eq!(m.score(&g).unwrap(), 0.0);
        }
    }

    #[test]
    fn wrong_feature_width_is_reported() {
        let mut g = SyntheticComplex::generate(&SyntheticConfig::default(), 0, true).graph;
        g.ligand_features = Tensor::zeros(g.n_ligand(), 7);
        let m = Model::<f64>::init(small(ModelKind::Gnnf, HeadKind::Cls), 0, 0.0).unwrap();
        assert!(matches!(
            m.score(&g),
            Err(ModelError::FeatureWidth { got: 7, .. })
        ));
    }

    #[test]
    fn f32_model_tracks_f64() {
        let g = SyntheticComplex::generate(&SyntheticConfig::default(), 1, true).graph;
        let cfg = small(ModelKind::Gnnp, HeadKind::Cls);
        let a = Model::<f64>::init(cfg.clone(), 5, 0.0)
            .unwrap()
            .score(&g)
            .unwrap();
        let b = Model::<f32>::init(cfg, 5, 0.0).unwrap().score(&g).unwrap();
        assert!((a - b as f64).abs() < 1e-4);
    }
}
