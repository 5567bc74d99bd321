//! MLP building blocks and the full model bundle: per-view autoencoders, the
//! online/target network pair updated by exponential moving average, cross-view
//! latent predictors, and softmax cluster heads.
//!
//! The online encoder is the autoencoder's encoder (one shared object); the
//! target network owns separate encoder/projector copies that gradient steps
//! never touch. Only [`ema_update`] moves target parameters.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, NodeId, Tape, L2NORM_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    None,
    Softmax,
    L2Norm,
}

/// Fully connected layers with relu between them and a configurable output
/// activation. Parameters are plain matrices; differentiation happens by
/// replaying the forward pass on a [`Tape`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Matrix>,
    output_activation: OutputActivation,
}

/// Tape leaf ids for one Mlp's parameters, in `params()` order.
#[derive(Debug, Clone)]
pub struct MlpNodes {
    ws: Vec<NodeId>,
    bs: Vec<NodeId>,
}

impl Mlp {
    /// Xavier-uniform weights, zero biases.
    pub fn init(dims: &[usize], act: OutputActivation, rng: &mut ChaCha8Rng) -> Mlp {
        assert!(dims.len() >= 2, "an Mlp needs input and output dims");
        assert!(dims.iter().all(|&d| d >= 1), "dims must be positive");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            weights.push(Matrix::from_vec(fan_in, fan_out, data).expect("init samples are finite"));
            biases.push(Matrix::zeros(1, fan_out));
        }
        Mlp {
            dims: dims.to_vec(),
            weights,
            biases,
            output_activation: act,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    /// Weight/bias matrices interleaved per layer: w0, b0, w1, b1, ...
    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = Vec::with_capacity(2 * self.num_layers());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w);
            out.push(b);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::DimMismatch {
                op: "mlp forward",
                left: x.shape_str(),
                right: format!("input dim {}", self.in_dim()),
            });
        }
        let mut h = x.clone();
        for i in 0..self.num_layers() {
            h = h.matmul(&self.weights[i])?.add_row_vec(&self.biases[i])?;
            if i + 1 < self.num_layers() {
                h = h.relu();
            }
        }
        Ok(match self.output_activation {
            OutputActivation::None => h,
            OutputActivation::Softmax => h.softmax_rows(),
            OutputActivation::L2Norm => h.l2norm_rows_eps(L2NORM_EPS).0,
        })
    }

    /// Registers this Mlp's parameters as trainable tape leaves.
    pub fn insert_params(&self, t: &mut Tape) -> MlpNodes {
        let ws = self.weights.iter().map(|w| t.param(w.clone())).collect();
        let bs = self.biases.iter().map(|b| t.param(b.clone())).collect();
        MlpNodes { ws, bs }
    }

    /// Same forward pass as [`Mlp::forward`], recorded for differentiation.
    pub fn forward_tape(&self, t: &mut Tape, nodes: &MlpNodes, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        for i in 0..self.num_layers() {
            h = t.matmul(h, nodes.ws[i])?;
            h = t.add_row_vec(h, nodes.bs[i])?;
            if i + 1 < self.num_layers() {
                h = t.relu(h);
            }
        }
        Ok(match self.output_activation {
            OutputActivation::None => h,
            OutputActivation::Softmax => t.softmax_rows(h),
            OutputActivation::L2Norm => t.l2norm_rows(h),
        })
    }
}

impl MlpNodes {
    /// Node ids in `params()` order.
    pub fn ids(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(2 * self.ws.len());
        for (w, b) in self.ws.iter().zip(&self.bs) {
            out.push(*w);
            out.push(*b);
        }
        out
    }
}

/// Architecture hyper-parameters; every consumer of the latent space derives
/// its dims from these.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ModelArch {
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub projector_hidden: usize,
    pub projector_out: usize,
    pub predictor_hidden: usize,
    pub cross_hidden: usize,
    /// Fidelity switch: pass predictor logits (and the target projection)
    /// through a row softmax before the terminal unit normalization.
    pub predictor_softmax: bool,
}

impl Default for ModelArch {
    fn default() -> Self {
        ModelArch {
            hidden: vec![64, 32],
            latent: 8,
            projector_hidden: 32,
            projector_out: 8,
            predictor_hidden: 32,
            cross_hidden: 32,
            predictor_softmax: false,
        }
    }
}

/// Projection/prediction heads of the gradient-trained branch. Its encoder is
/// the view's autoencoder encoder, stored once on [`ViewModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineNetwork {
    pub projector: Mlp,
    pub predictor: Mlp,
}

/// EMA-trailed copy of encoder and projector; untouched by gradient steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetNetwork {
    pub encoder: Mlp,
    pub projector: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualNetworks {
    pub online: OnlineNetwork,
    pub target: TargetNetwork,
}

/// Latent-to-latent MLPs mapping each view's code into the other's space;
/// used both as a training signal and to impute missing views.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossPredictors {
    pub g12: Mlp,
    pub g21: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub dual: DualNetworks,
    pub cluster_head: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub views: Vec<ViewModel>,
    pub cross: CrossPredictors,
    arch: ModelArch,
    view_dims: Vec<usize>,
    k: usize,
}

impl ModelBundle {
    pub fn arch(&self) -> &ModelArch {
        &self.arch
    }

    pub fn view_dims(&self) -> &[usize] {
        &self.view_dims
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent
    }

    /// Every gradient-trained matrix: per view the autoencoder, online heads
    /// and cluster head, then the cross predictors. Target networks are
    /// excluded by construction.
    pub fn trainable_params(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for v in &self.views {
            out.extend(v.encoder.params());
            out.extend(v.decoder.params());
            out.extend(v.dual.online.projector.params());
            out.extend(v.dual.online.predictor.params());
            out.extend(v.cluster_head.params());
        }
        out.extend(self.cross.g12.params());
        out.extend(self.cross.g21.params());
        out
    }

    pub fn trainable_params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for v in &mut self.views {
            out.extend(v.encoder.params_mut());
            out.extend(v.decoder.params_mut());
            out.extend(v.dual.online.projector.params_mut());
            out.extend(v.dual.online.predictor.params_mut());
            out.extend(v.cluster_head.params_mut());
        }
        out.extend(self.cross.g12.params_mut());
        out.extend(self.cross.g21.params_mut());
        out
    }

    pub fn target_params(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for v in &self.views {
            out.extend(v.dual.target.encoder.params());
            out.extend(v.dual.target.projector.params());
        }
        out
    }

    /// Human-readable names aligned index-for-index with
    /// [`ModelBundle::trainable_params`], for optimizer diagnostics.
    pub fn trainable_param_names(&self) -> Vec<String> {
        fn push_mlp(out: &mut Vec<String>, prefix: &str, mlp: &Mlp) {
            for i in 0..mlp.num_layers() {
                out.push(format!("{prefix}.w{i}"));
                out.push(format!("{prefix}.b{i}"));
            }
        }
        let mut out = Vec::new();
        for (v, vm) in self.views.iter().enumerate() {
            push_mlp(&mut out, &format!("view{v}.encoder"), &vm.encoder);
            push_mlp(&mut out, &format!("view{v}.decoder"), &vm.decoder);
            push_mlp(
                &mut out,
                &format!("view{v}.projector"),
                &vm.dual.online.projector,
            );
            push_mlp(
                &mut out,
                &format!("view{v}.predictor"),
                &vm.dual.online.predictor,
            );
            push_mlp(&mut out, &format!("view{v}.cluster_head"), &vm.cluster_head);
        }
        push_mlp(&mut out, "cross.g12", &self.cross.g12);
        push_mlp(&mut out, "cross.g21", &self.cross.g21);
        out
    }
}

/// Initializes the full bundle: Xavier-uniform weights, zero biases, target
/// networks starting as exact copies of their online counterparts.
/// Deterministic per seed.
pub fn init_model(
    view_dims: &[usize],
    arch: &ModelArch,
    k: usize,
    seed: u64,
) -> Result<ModelBundle> {
    if view_dims.len() != 2 {
        return Err(Error::Config(format!(
            "expected exactly 2 views, got {}",
            view_dims.len()
        )));
    }
    if view_dims.iter().any(|&d| d == 0) || arch.latent == 0 || k < 1 {
        return Err(Error::Config(
            "dims and cluster count must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut views = Vec::with_capacity(2);
    for &d in view_dims {
        let mut enc_dims = vec![d];
        enc_dims.extend(&arch.hidden);
        enc_dims.push(arch.latent);
        let mut dec_dims: Vec<usize> = enc_dims.clone();
        dec_dims.reverse();

        let encoder = Mlp::init(&enc_dims, OutputActivation::None, &mut rng);
        let decoder = Mlp::init(&dec_dims, OutputActivation::None, &mut rng);
        let projector = Mlp::init(
            &[arch.latent, arch.projector_hidden, arch.projector_out],
            OutputActivation::None,
            &mut rng,
        );
        let predictor = Mlp::init(
            &[
                arch.projector_out,
                arch.predictor_hidden,
                arch.projector_out,
            ],
            OutputActivation::None,
            &mut rng,
        );
        let cluster_head = Mlp::init(&[arch.latent, k], OutputActivation::Softmax, &mut rng);

        let target = TargetNetwork {
            encoder: encoder.clone(),
            projector: projector.clone(),
        };
        views.push(ViewModel {
            encoder,
            decoder,
            dual: DualNetworks {
                online: OnlineNetwork {
                    projector,
                    predictor,
                },
                target,
            },
            cluster_head,
        });
    }
    let g12 = Mlp::init(
        &[arch.latent, arch.cross_hidden, arch.latent],
        OutputActivation::None,
        &mut rng,
    );
    let g21 = Mlp::init(
        &[arch.latent, arch.cross_hidden, arch.latent],
        OutputActivation::None,
        &mut rng,
    );
    Ok(ModelBundle {
        views,
        cross: CrossPredictors { g12, g21 },
        arch: arch.clone(),
        view_dims: view_dims.to_vec(),
        k,
    })
}

/// Latent code of view `v`.
pub fn encode(bundle: &ModelBundle, v: usize, x: &Matrix) -> Result<Matrix> {
    bundle.views[v].encoder.forward(x)
}

/// Gradient-branch embedding: predictor(projector(encoder(x))), rows unit-norm.
pub fn online_forward(bundle: &ModelBundle, v: usize, x: &Matrix) -> Result<Matrix> {
    let vm = &bundle.views[v];
    let z = vm.encoder.forward(x)?;
    let p = vm.dual.online.projector.forward(&z)?;
    let q = vm.dual.online.predictor.forward(&p)?;
    Ok(terminal_normalize(&q, bundle.arch.predictor_softmax))
}

/// Trail-branch embedding: target projector(target encoder(x)), rows
/// unit-norm. Never recorded on a tape; its output enters losses as a
/// constant, which is the stop-gradient contract.
pub fn target_forward(bundle: &ModelBundle, v: usize, x: &Matrix) -> Result<Matrix> {
    let t = &bundle.views[v].dual.target;
    let z = t.encoder.forward(x)?;
    let p = t.projector.forward(&z)?;
    Ok(terminal_normalize(&p, bundle.arch.predictor_softmax))
}

fn terminal_normalize(h: &Matrix, softmax_first: bool) -> Matrix {
    let h = if softmax_first {
        h.softmax_rows()
    } else {
        h.clone()
    };
    h.l2norm_rows_eps(L2NORM_EPS).0
}

/// Moves every target parameter toward its online counterpart:
/// delta <- m * delta + (1 - m) * theta. Applied to target encoder and
/// projector of every view; a contraction by exactly m per call.
pub fn ema_update(bundle: &mut ModelBundle, m: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&m) || m.is_nan() {
        return Err(Error::Config(format!(
            "momentum must lie in [0,1], got {m}"
        )));
    }
    for vm in &mut bundle.views {
        ema_pair(&mut vm.dual.target.encoder, &vm.encoder, m);
        ema_pair(&mut vm.dual.target.projector, &vm.dual.online.projector, m);
    }
    Ok(())
}

fn ema_pair(target: &mut Mlp, online: &Mlp, m: f64) {
    for (t, o) in target.params_mut().into_iter().zip(online.params()) {
        for (tv, ov) in t.data_mut().iter_mut().zip(o.data()) {
            *tv = m * *tv + (1.0 - m) * ov;
        }
    }
}

/// Resets target networks to exact copies of their online counterparts.
pub fn sync_targets(bundle: &mut ModelBundle) {
    for vm in &mut bundle.views {
        vm.dual.target.encoder = vm.encoder.clone();
        vm.dual.target.projector = vm.dual.online.projector.clone();
    }
}

/// Maps a latent batch of `from_view` into the other view's latent space.
pub fn cross_predict(bundle: &ModelBundle, from_view: usize, z: &Matrix) -> Result<Matrix> {
    match from_view {
        0 => bundle.cross.g12.forward(z),
        1 => bundle.cross.g21.forward(z),
        other => Err(Error::Config(format!("no view {other}"))),
    }
}
