//! 64-bit gradient checks of every training loss on reduced networks.
//!
//! Joint parameter sets carry the encoder under `encoder.` and the occluder
//! under `occluder.`, so gradients flow into both through the masks.

use rand::Rng;

use crate::error::Result;
use crate::masks::{init_occluder, mean_penalty, occluder_forward, OccluderConfig};
use crate::numerics::{grad_check, Binding, Bound, CheckedLoss, GradCheckReport, ParamSet, Tape, Tensor, Var};
use crate::rng;
use crate::ssl::{
    average, backbone, init_bundle, loss_simsiam, predictor, projector, EncoderConfig, Objective, SslConfig,
};
use crate::trainer::{adios_terms, occluder_loss};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-4;

const ENC: &str = "encoder.";
const OCC: &str = "occluder.";

/// Problem size of the suite.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub batch: usize,
    pub image_size: usize,
    pub n_masks: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { batch: 2, image_size: 8, n_masks: 2, lambda: 0.5, seed: 0 }
    }
}

/// What a check differentiates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckKind {
    /// `(1/N)Σ L⁽ⁿ⁾` of an objective with occluder masks.
    Objective(Objective),
    /// `λ·p` through the occluder.
    Penalty,
    /// The occluder's `−L + λp` for SimCLR.
    Composite,
}

pub struct SuiteCase {
    kind: CheckKind,
    name: String,
    ssl: SslConfig,
    occ: OccluderConfig,
    lambda: f64,
    view_a: Tensor<f64>,
    view_b: Tensor<f64>,
    params: ParamSet<f64>,
    /// SimSiam stop-gradient targets `(h_A, h_B)` held at the base point.
    sg_targets: Option<(Tensor<f64>, Tensor<f64>)>,
}

fn random_images(b: usize, s: usize, seed: u64, name: &str) -> Tensor<f64> {
    let mut r = rng::stream(seed, name);
    Tensor::new(&[b, 3, s, s], (0..b * 3 * s * s).map(|_| r.random::<f64>()).collect()).expect("sizes")
}

fn split(p: &ParamSet<f64>) -> (ParamSet<f64>, ParamSet<f64>) {
    (p.strip_prefix(ENC), p.strip_prefix(OCC))
}

impl SuiteCase {
    pub fn new(kind: CheckKind, cfg: &SuiteConfig) -> Result<Self> {
        let objective = match kind {
            CheckKind::Objective(o) => o,
            _ => Objective::SimClr,
        };
        let ssl = SslConfig { objective, encoder: EncoderConfig::tiny(), ..Default::default() };
        let occ = OccluderConfig::tiny(cfg.n_masks);
        let enc = init_bundle(&ssl.encoder, objective, cfg.image_size, cfg.seed)?.cast::<f64>();
        let occp = init_occluder(&occ, cfg.image_size, cfg.seed)?.cast::<f64>();
        let mut params = enc.prefixed(ENC);
        params.extend(occp.prefixed(OCC));
        // Zero-initialised biases put some ReLU inputs exactly on the kink,
        // where central differences see half the slope.
        let mut r = rng::stream(cfg.seed, "gradcheck.bias");
        for (name, p) in params.iter_mut() {
            if name.ends_with(".b") {
                p.tensor.data_mut().iter_mut().for_each(|v| *v += r.random_range(-0.1..0.1));
            }
        }
        if kind == CheckKind::Penalty {
            for name in params.names().map(str::to_string).collect::<Vec<_>>() {
                if name.starts_with(ENC) {
                    let t = params.get(&name).expect("listed").clone();
                    params.insert(name, t, false);
                }
            }
        }
        let view_a = random_images(cfg.batch, cfg.image_size, cfg.seed, "gradcheck.a");
        let view_b = random_images(cfg.batch, cfg.image_size, cfg.seed, "gradcheck.b");
        let name = match kind {
            CheckKind::Objective(o) => format!("{o}-adios"),
            CheckKind::Penalty => "penalty-occluder".into(),
            CheckKind::Composite => "adios-step-composite".into(),
        };
        let mut case = Self { kind, name, ssl, occ, lambda: cfg.lambda, view_a, view_b, params, sg_targets: None };
        if objective == Objective::SimSiam {
            let tape = Tape::new();
            let (e, _) = split(&case.params);
            let b = e.bind(&tape, Binding::Frozen);
            let h = |x: &Tensor<f64>| backbone(&case.ssl.encoder, &b, "", tape.constant(x.clone())).value().as_ref().clone();
            case.sg_targets = Some((h(&case.view_a), h(&case.view_b)));
        }
        Ok(case)
    }

    pub fn params(&self) -> &ParamSet<f64> {
        &self.params
    }

    fn build<'t>(&self, tape: &'t Tape<f64>, enc: &Bound<'t, f64>, occ: &Bound<'t, f64>) -> Result<Var<'t, f64>> {
        let va = tape.constant(self.view_a.clone());
        let vb = tape.constant(self.view_b.clone());
        match self.kind {
            CheckKind::Penalty => Ok(mean_penalty(occluder_forward(&self.occ, occ, va)?).scale(self.lambda)),
            CheckKind::Composite => {
                let t = adios_terms(&self.ssl, &self.occ, enc, occ, va, vb, None)?;
                Ok(occluder_loss(&t, self.lambda))
            }
            CheckKind::Objective(_) if self.sg_targets.is_some() => self.simsiam_held_targets(tape, enc, occ, va, vb),
            CheckKind::Objective(_) => Ok(adios_terms(&self.ssl, &self.occ, enc, occ, va, vb, None)?.objective),
        }
    }

    /// SimSiam with the stop-gradient branch replaced by its base-point value,
    /// so finite differences see the same function the tape differentiates.
    fn simsiam_held_targets<'t>(
        &self,
        tape: &'t Tape<f64>,
        enc: &Bound<'t, f64>,
        occ: &Bound<'t, f64>,
        va: Var<'t, f64>,
        vb: Var<'t, f64>,
    ) -> Result<Var<'t, f64>> {
        let (ha, hb) = self.sg_targets.as_ref().expect("simsiam case");
        let n = self.occ.n_masks;
        let (ma, mb) = (occluder_forward(&self.occ, occ, va)?, occluder_forward(&self.occ, occ, vb)?);
        let mut all: Vec<_> = (0..n).map(|k| va.apply_mask(ma.select_channel(k))).collect();
        all.extend((0..n).map(|k| vb.apply_mask(mb.select_channel(k))));
        let bsz = self.view_a.dim(0);
        let z = projector(enc, "", backbone(&self.ssl.encoder, enc, "", Var::concat_outer(&all)));
        let p = predictor(enc, z);
        let (ha, hb) = (tape.constant(ha.clone()), tape.constant(hb.clone()));
        let rows = |k: usize| p.slice_outer(k * bsz, (k + 1) * bsz);
        let terms: Vec<_> = (0..n).map(|k| loss_simsiam(rows(k), rows(n + k), ha, hb)).collect();
        Ok(average(&terms))
    }
}

impl CheckedLoss for SuiteCase {
    fn name(&self) -> &str {
        &self.name
    }

    fn loss(&self, params: &ParamSet<f64>) -> Result<f64> {
        let (e, o) = split(params);
        let tape = Tape::new();
        Ok(self.build(&tape, &e.bind(&tape, Binding::Frozen), &o.bind(&tape, Binding::Frozen))?.item())
    }

    fn gradient(&self, params: &ParamSet<f64>) -> Result<ParamSet<f64>> {
        let (e, o) = split(params);
        let tape = Tape::new();
        let (eb, ob) = (e.bind(&tape, Binding::Train), o.bind(&tape, Binding::Train));
        let out = self.build(&tape, &eb, &ob)?;
        let g = tape.backward(out);
        let mut grads = eb.grads(&g).prefixed(ENC);
        grads.extend(ob.grads(&g).prefixed(OCC));
        Ok(grads)
    }
}

/// Every check in the suite, in report order.
pub fn suite_kinds() -> Vec<CheckKind> {
    let mut v: Vec<CheckKind> = Objective::ALL.into_iter().map(CheckKind::Objective).collect();
    v.extend([CheckKind::Penalty, CheckKind::Composite]);
    v
}

pub fn run_suite(cfg: &SuiteConfig, eps: f64, tol: f64) -> Result<Vec<GradCheckReport>> {
    suite_kinds()
        .into_iter()
        .map(|k| {
            let case = SuiteCase::new(k, cfg)?;
            Ok(grad_check(&case, case.params(), eps, tol))
        })
        .collect()
}
