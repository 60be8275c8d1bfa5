//! Feed-forward and residual networks with exact spatial jets and exact
//! parameter gradients.
//!
//! Parameters live in one flat vector. Layers are stored in evaluation
//! order; each layer is its weight matrix (row-major, `fan_out × fan_in`)
//! followed by its bias:
//!
//! * FFNet: `d → H`, `(L - 1) × (H → H)`, `H → c`.
//! * ResNet: affine lift `d → H`, `L × (H → H)` consumed two per block,
//!   `H → c`.
//!
//! Spatial derivatives are propagated forward as tangents (one per input
//! direction). Parameter gradients run a reverse sweep over that forward
//! computation, so objectives may depend on `∇_x u` as well as `u`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{Field, Point};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArchKind {
    FFNet,
    ResNet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// `x` for `x ≥ 0`, `e^x - 1` otherwise.
    Elu,
    /// `max(x³, 0)`.
    ReluCubed,
}

impl Activation {
    /// Returns `(σ(x), σ'(x), σ''(x))`.
    ///
    /// ELU is only C¹ at the origin; its second derivative there is taken
    /// from the right (0).
    #[inline]
    pub fn eval3(self, x: f64) -> (f64, f64, f64) {
        match self {
            Activation::Elu => {
                if x >= 0.0 {
                    (x, 1.0, 0.0)
                } else {
                    let e = x.exp();
                    (e - 1.0, e, e)
                }
            }
            Activation::ReluCubed => {
                if x > 0.0 {
                    (x * x * x, 3.0 * x * x, 6.0 * x)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
        }
    }

    #[inline]
    pub fn value(self, x: f64) -> f64 {
        self.eval3(x).0
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchKind::FFNet => "FFNet",
            ArchKind::ResNet => "ResNet",
        })
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ffnet" => Ok(ArchKind::FFNet),
            "resnet" => Ok(ArchKind::ResNet),
            _ => Err(Error::Config(format!("unknown architecture kind `{s}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Elu => "ELU",
            Activation::ReluCubed => "ReLUCubed",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "elu" => Ok(Activation::Elu),
            "relucubed" | "relu3" => Ok(Activation::ReluCubed),
            _ => Err(Error::Config(format!("unknown activation `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub kind: ArchKind,
    pub input_dim: usize,
    pub output_dim: usize,
    pub width: usize,
    /// FFNet: hidden layers. ResNet: layers, two per block.
    pub depth: usize,
    pub activation: Activation,
}

#[derive(Clone, Copy, Debug)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

impl Layer {
    fn len(&self) -> usize {
        self.fan_out * (self.fan_in + 1)
    }

    fn weights<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.offset..self.offset + self.fan_in * self.fan_out]
    }

    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        let start = self.offset + self.fan_in * self.fan_out;
        &p[start..start + self.fan_out]
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.width == 0 || self.depth == 0 {
            return Err(Error::InvalidArchitecture(format!("dimensions must be positive: {self}")));
        }
        if self.kind == ArchKind::ResNet && !self.depth.is_multiple_of(2) {
            return Err(Error::InvalidArchitecture(format!("ResNet depth must be even, got {}", self.depth)));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (d, c, h, l) = (self.input_dim, self.output_dim, self.width, self.depth);
        let hidden = match self.kind {
            ArchKind::FFNet => (l - 1) * (h * h + h),
            ArchKind::ResNet => l * (h * h + h),
        };
        d * h + h + hidden + h * c + c
    }

    fn layers(&self) -> Vec<Layer> {
        let (d, c, h, l) = (self.input_dim, self.output_dim, self.width, self.depth);
        let inner = match self.kind {
            ArchKind::FFNet => l - 1,
            ArchKind::ResNet => l,
        };
        let mut shapes = vec![(d, h)];
        shapes.extend(std::iter::repeat_n((h, h), inner));
        shapes.push((h, c));
        let mut offset = 0;
        shapes
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let layer = Layer { fan_in, fan_out, offset };
                offset += layer.len();
                layer
            })
            .collect()
    }

    /// Checkpoint header: `arch=..,d=..,c=..,H=..,L=..,act=..,count=..`.
    pub fn header(&self) -> String {
        format!(
            "arch={},d={},c={},H={},L={},act={},count={}",
            self.kind,
            self.input_dim,
            self.output_dim,
            self.width,
            self.depth,
            self.activation,
            self.param_count()
        )
    }

    pub fn parse_header(line: &str) -> Result<(Architecture, usize)> {
        let bad = |msg: String| Error::Parse { line: 1, msg };
        let mut kind = None;
        let mut act = None;
        let (mut d, mut c, mut h, mut l, mut count) = (None, None, None, None, None);
        for item in line.trim().split(',') {
            let (key, value) = item.split_once('=').ok_or_else(|| bad(format!("malformed header item `{item}`")))?;
            let num = || value.trim().parse::<usize>().map_err(|e| bad(format!("{key}: {e}")));
            match key.trim() {
                "arch" => kind = Some(value.trim().parse::<ArchKind>()?),
                "act" => act = Some(value.trim().parse::<Activation>()?),
                "d" => d = Some(num()?),
                "c" => c = Some(num()?),
                "H" => h = Some(num()?),
                "L" => l = Some(num()?),
                "count" => count = Some(num()?),
                other => return Err(bad(format!("unknown header key `{other}`"))),
            }
        }
        let missing = |k: &str| bad(format!("header is missing `{k}`"));
        let arch = Architecture {
            kind: kind.ok_or_else(|| missing("arch"))?,
            input_dim: d.ok_or_else(|| missing("d"))?,
            output_dim: c.ok_or_else(|| missing("c"))?,
            width: h.ok_or_else(|| missing("H"))?,
            depth: l.ok_or_else(|| missing("L"))?,
            activation: act.ok_or_else(|| missing("act"))?,
        };
        Ok((arch, count.ok_or_else(|| missing("count"))?))
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}(d={}, c={}, H={}, L={}, {})",
            self.kind, self.input_dim, self.output_dim, self.width, self.depth, self.activation
        )
    }
}

/// Network value and Jacobian at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialJet {
    pub value: Vec<f64>,
    /// Row-major `c × d`: `grad[i * d + j] = ∂u_i/∂x_j`.
    pub grad: Vec<f64>,
}

impl SpatialJet {
    pub fn zeros(c: usize, d: usize) -> Self {
        SpatialJet { value: vec![0.0; c], grad: vec![0.0; c * d] }
    }
}

/// An evaluation site of an [`Objective`]; `jet` requests the Jacobian.
#[derive(Clone, Debug)]
pub struct Site {
    pub x: Vec<f64>,
    pub jet: bool,
}

/// A scalar objective assembled from network evaluations at fixed sites.
///
/// `pullback` writes `∂objective/∂jet_i` for every site. For sites without
/// `jet`, the `grad` parts of both the jet and the cotangent are empty.
pub trait Objective {
    fn sites(&self) -> &[Site];
    fn value(&self, jets: &[SpatialJet]) -> f64;
    fn pullback(&self, jets: &[SpatialJet], cotangents: &mut [SpatialJet]);
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    arch: Architecture,
    params: Vec<f64>,
}

/// Per-layer forward record reused between evaluations.
#[derive(Clone, Debug, Default)]
struct Record {
    input: Vec<f64>,
    d_input: Vec<f64>,
    pre: Vec<f64>,
    d_pre: Vec<f64>,
    /// `(σ'(pre), σ''(pre))` when an activation follows this layer.
    sig: Vec<[f64; 2]>,
}

/// Scratch space for repeated evaluations of one network.
#[derive(Clone, Debug)]
pub struct Workspace {
    layers: Vec<Layer>,
    records: Vec<Record>,
    out: Vec<f64>,
    d_out: Vec<f64>,
    bar: Vec<f64>,
    d_bar: Vec<f64>,
    bar2: Vec<f64>,
    d_bar2: Vec<f64>,
    skip_bar: Vec<f64>,
    skip_d_bar: Vec<f64>,
}

impl Network {
    pub fn new(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::DimensionMismatch { expected: arch.param_count(), actual: params.len() });
        }
        Ok(Network { arch, params })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = rng::stream(seed, rng::NETWORK_STREAM);
        let mut params = vec![0.0; arch.param_count()];
        for layer in arch.layers() {
            let a = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
            for w in &mut params[layer.offset..layer.offset + layer.fan_in * layer.fan_out] {
                *w = rng.random_range(-a..a);
            }
        }
        Ok(Network { arch, params })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        Network::new(arch, vec![0.0; arch.param_count()])
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch { expected: self.params.len(), actual: params.len() });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn workspace(&self) -> Workspace {
        let layers = self.arch.layers();
        let records = vec![Record::default(); layers.len()];
        Workspace {
            layers,
            records,
            out: Vec::new(),
            d_out: Vec::new(),
            bar: Vec::new(),
            d_bar: Vec::new(),
            bar2: Vec::new(),
            d_bar2: Vec::new(),
            skip_bar: Vec::new(),
            skip_d_bar: Vec::new(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        self.forward(&mut ws, x, false);
        ws.out.clone()
    }

    pub fn eval_jet(&self, x: &[f64]) -> SpatialJet {
        let mut ws = self.workspace();
        let mut jet = SpatialJet::zeros(self.arch.output_dim, self.arch.input_dim);
        self.jet_with(&mut ws, x, &mut jet);
        jet
    }

    /// Value only, reusing `ws`.
    pub fn eval_with(&self, ws: &mut Workspace, x: &[f64], out: &mut [f64]) {
        self.forward(ws, x, false);
        out.copy_from_slice(&ws.out);
    }

    /// Value and Jacobian, reusing `ws`.
    pub fn jet_with(&self, ws: &mut Workspace, x: &[f64], jet: &mut SpatialJet) {
        self.forward(ws, x, true);
        self.read_jet(ws, jet);
    }

    fn read_jet(&self, ws: &Workspace, jet: &mut SpatialJet) {
        let (c, d) = (self.arch.output_dim, self.arch.input_dim);
        jet.value.clear();
        jet.value.extend_from_slice(&ws.out);
        jet.grad.clear();
        if ws.d_out.len() == c * d {
            jet.grad.resize(c * d, 0.0);
            for k in 0..d {
                for i in 0..c {
                    jet.grad[i * d + k] = ws.d_out[k * c + i];
                }
            }
        }
    }

    /// Runs the forward sweep at `x`, then accumulates into `grad` the
    /// parameter gradient of `⟨cotangent, jet⟩`, where `cotangent` is
    /// produced from the jet by `pull`. Returns whatever `pull` returns
    /// alongside the cotangent.
    pub fn accumulate_site<T>(
        &self,
        ws: &mut Workspace,
        x: &[f64],
        with_jet: bool,
        jet: &mut SpatialJet,
        cot: &mut SpatialJet,
        grad: &mut [f64],
        pull: impl FnOnce(&SpatialJet, &mut SpatialJet) -> T,
    ) -> T {
        self.forward(ws, x, with_jet);
        self.read_jet(ws, jet);
        let (c, d) = (self.arch.output_dim, self.arch.input_dim);
        cot.value.clear();
        cot.value.resize(c, 0.0);
        cot.grad.clear();
        cot.grad.resize(if with_jet { c * d } else { 0 }, 0.0);
        let out = pull(jet, cot);
        self.backward(ws, with_jet, cot, grad);
        out
    }

    fn forward(&self, ws: &mut Workspace, x: &[f64], with_jet: bool) {
        assert_eq!(x.len(), self.arch.input_dim, "input dimension");
        let d = self.arch.input_dim;
        let nd = if with_jet { d } else { 0 };
        let act = self.arch.activation;
        let p = &self.params;
        let nl = ws.layers.len();

        let first = &mut ws.records[0];
        first.input.clear();
        first.input.extend_from_slice(x);
        first.d_input.clear();
        first.d_input.resize(nd * d, 0.0);
        for k in 0..nd {
            first.d_input[k * d + k] = 1.0;
        }

        match self.arch.kind {
            ArchKind::FFNet => {
                for li in 0..nl {
                    let layer = ws.layers[li];
                    let (head, tail) = ws.records.split_at_mut(li + 1);
                    let rec = &mut head[li];
                    affine_forward(layer, p, &rec.input, &rec.d_input, nd, &mut rec.pre, &mut rec.d_pre);
                    if li + 1 < nl {
                        let next = &mut tail[0];
                        activate(act, &rec.pre, &rec.d_pre, nd, &mut rec.sig, &mut next.input, &mut next.d_input);
                    } else {
                        ws.out.clear();
                        ws.out.extend_from_slice(&rec.pre);
                        ws.d_out.clear();
                        ws.d_out.extend_from_slice(&rec.d_pre);
                    }
                }
            }
            ArchKind::ResNet => {
                // Lift (affine only).
                {
                    let layer = ws.layers[0];
                    let (head, tail) = ws.records.split_at_mut(1);
                    let rec = &mut head[0];
                    affine_forward(layer, p, &rec.input, &rec.d_input, nd, &mut rec.pre, &mut rec.d_pre);
                    let next = &mut tail[0];
                    next.input.clear();
                    next.input.extend_from_slice(&rec.pre);
                    next.d_input.clear();
                    next.d_input.extend_from_slice(&rec.d_pre);
                }
                let blocks = self.arch.depth / 2;
                for b in 0..blocks {
                    let l1 = 1 + 2 * b;
                    let l2 = l1 + 1;
                    let (head, tail) = ws.records.split_at_mut(l2);
                    let r1 = &mut head[l1];
                    let r2 = &mut tail[0];
                    affine_forward(ws.layers[l1], p, &r1.input, &r1.d_input, nd, &mut r1.pre, &mut r1.d_pre);
                    activate(act, &r1.pre, &r1.d_pre, nd, &mut r1.sig, &mut r2.input, &mut r2.d_input);
                    affine_forward(ws.layers[l2], p, &r2.input, &r2.d_input, nd, &mut r2.pre, &mut r2.d_pre);
                    // Block output = block input + σ(z2), written into the next record.
                    let (upto, rest) = ws.records.split_at_mut(l2 + 1);
                    let (lower, upper) = upto.split_at_mut(l2);
                    let r1 = &lower[l1];
                    let r2 = &mut upper[0];
                    r2.sig.clear();
                    let next = &mut rest[0];
                    let h = r2.pre.len();
                    next.input.clear();
                    next.input.resize(h, 0.0);
                    next.d_input.clear();
                    next.d_input.resize(nd * h, 0.0);
                    for i in 0..h {
                        let (s, ds, dds) = act.eval3(r2.pre[i]);
                        r2.sig.push([ds, dds]);
                        next.input[i] = r1.input[i] + s;
                        for k in 0..nd {
                            next.d_input[k * h + i] = r1.d_input[k * h + i] + ds * r2.d_pre[k * h + i];
                        }
                    }
                }
                let li = nl - 1;
                let rec = &mut ws.records[li];
                affine_forward(ws.layers[li], p, &rec.input, &rec.d_input, nd, &mut rec.pre, &mut rec.d_pre);
                ws.out.clear();
                ws.out.extend_from_slice(&rec.pre);
                ws.d_out.clear();
                ws.d_out.extend_from_slice(&rec.d_pre);
            }
        }
    }

    /// Reverse sweep over the last forward pass. `cot.grad` is row-major
    /// `c × d` like [`SpatialJet::grad`].
    fn backward(&self, ws: &mut Workspace, with_jet: bool, cot: &SpatialJet, grad: &mut [f64]) {
        let (c, d) = (self.arch.output_dim, self.arch.input_dim);
        let nd = if with_jet { d } else { 0 };
        let p = &self.params;
        let nl = ws.layers.len();

        // Seed: bar = ∂/∂out, d_bar[k] = ∂/∂(∂out/∂x_k).
        ws.bar.clear();
        ws.bar.extend_from_slice(&cot.value);
        ws.d_bar.clear();
        ws.d_bar.resize(nd * c, 0.0);
        for k in 0..nd {
            for i in 0..c {
                ws.d_bar[k * c + i] = cot.grad[i * d + k];
            }
        }

        let Workspace { layers, records, bar, d_bar, bar2, d_bar2, skip_bar, skip_d_bar, .. } = ws;

        match self.arch.kind {
            ArchKind::FFNet => {
                for li in (0..nl).rev() {
                    let layer = layers[li];
                    let rec = &records[li];
                    if li + 1 < nl {
                        // bar currently holds ∂/∂(activation output); move to pre-activation.
                        activate_backward(&rec.sig, &rec.d_pre, nd, bar, d_bar);
                    }
                    let need_input = li > 0;
                    affine_backward(layer, p, &rec.input, &rec.d_input, nd, bar, d_bar, grad, need_input, bar2, d_bar2);
                    std::mem::swap(bar, bar2);
                    std::mem::swap(d_bar, d_bar2);
                }
            }
            ArchKind::ResNet => {
                let li = nl - 1;
                let rec = &records[li];
                affine_backward(layers[li], p, &rec.input, &rec.d_input, nd, bar, d_bar, grad, true, bar2, d_bar2);
                std::mem::swap(bar, bar2);
                std::mem::swap(d_bar, d_bar2);
                let blocks = self.arch.depth / 2;
                for b in (0..blocks).rev() {
                    let l1 = 1 + 2 * b;
                    let l2 = l1 + 1;
                    // bar: ∂/∂(block output). The skip path passes it through unchanged.
                    skip_bar.clear();
                    skip_bar.extend_from_slice(bar);
                    skip_d_bar.clear();
                    skip_d_bar.extend_from_slice(d_bar);
                    let r2 = &records[l2];
                    activate_backward(&r2.sig, &r2.d_pre, nd, bar, d_bar);
                    affine_backward(layers[l2], p, &r2.input, &r2.d_input, nd, bar, d_bar, grad, true, bar2, d_bar2);
                    std::mem::swap(bar, bar2);
                    std::mem::swap(d_bar, d_bar2);
                    let r1 = &records[l1];
                    activate_backward(&r1.sig, &r1.d_pre, nd, bar, d_bar);
                    affine_backward(layers[l1], p, &r1.input, &r1.d_input, nd, bar, d_bar, grad, true, bar2, d_bar2);
                    std::mem::swap(bar, bar2);
                    std::mem::swap(d_bar, d_bar2);
                    for (a, s) in bar.iter_mut().zip(skip_bar.iter()) {
                        *a += s;
                    }
                    for (a, s) in d_bar.iter_mut().zip(skip_d_bar.iter()) {
                        *a += s;
                    }
                }
                let rec = &records[0];
                affine_backward(layers[0], p, &rec.input, &rec.d_input, nd, bar, d_bar, grad, false, bar2, d_bar2);
            }
        }
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.arch.header())?;
        for v in &self.params {
            // `{:?}` prints the shortest string that round-trips exactly.
            writeln!(w, "{v:?}")?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(Error::Parse { line: 1, msg: "empty checkpoint".into() })??;
        let (arch, count) = Architecture::parse_header(&header)?;
        if count != arch.param_count() {
            return Err(Error::Parse {
                line: 1,
                msg: format!("count={count} but architecture has {} parameters", arch.param_count()),
            });
        }
        let mut params = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let v = t.parse::<f64>().map_err(|e| Error::Parse { line: i + 2, msg: format!("{e}: `{t}`") })?;
            params.push(v);
        }
        if params.len() != count {
            return Err(Error::Parse {
                line: params.len() + 2,
                msg: format!("expected {count} values, found {}", params.len()),
            });
        }
        Network::new(arch, params)
    }
}

fn affine_forward(layer: Layer, p: &[f64], a: &[f64], da: &[f64], nd: usize, z: &mut Vec<f64>, dz: &mut Vec<f64>) {
    let (n_in, n_out) = (layer.fan_in, layer.fan_out);
    let w = layer.weights(p);
    let b = layer.bias(p);
    z.clear();
    z.resize(n_out, 0.0);
    dz.clear();
    dz.resize(nd * n_out, 0.0);
    for i in 0..n_out {
        let row = &w[i * n_in..(i + 1) * n_in];
        z[i] = b[i] + dot(row, a);
        for k in 0..nd {
            dz[k * n_out + i] = dot(row, &da[k * n_in..(k + 1) * n_in]);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn affine_backward(
    layer: Layer,
    p: &[f64],
    a: &[f64],
    da: &[f64],
    nd: usize,
    z_bar: &[f64],
    dz_bar: &[f64],
    grad: &mut [f64],
    need_input: bool,
    a_bar: &mut Vec<f64>,
    da_bar: &mut Vec<f64>,
) {
    let (n_in, n_out) = (layer.fan_in, layer.fan_out);
    let w = layer.weights(p);
    let (gw, gb) = grad[layer.offset..layer.offset + layer.len()].split_at_mut(n_in * n_out);
    for i in 0..n_out {
        gb[i] += z_bar[i];
        let row = &mut gw[i * n_in..(i + 1) * n_in];
        axpy(z_bar[i], a, row);
        for k in 0..nd {
            axpy(dz_bar[k * n_out + i], &da[k * n_in..(k + 1) * n_in], row);
        }
    }
    a_bar.clear();
    da_bar.clear();
    if !need_input {
        return;
    }
    a_bar.resize(n_in, 0.0);
    da_bar.resize(nd * n_in, 0.0);
    for i in 0..n_out {
        let row = &w[i * n_in..(i + 1) * n_in];
        axpy(z_bar[i], row, a_bar);
        for k in 0..nd {
            axpy(dz_bar[k * n_out + i], row, &mut da_bar[k * n_in..(k + 1) * n_in]);
        }
    }
}

fn activate(
    act: Activation,
    z: &[f64],
    dz: &[f64],
    nd: usize,
    sig: &mut Vec<[f64; 2]>,
    a: &mut Vec<f64>,
    da: &mut Vec<f64>,
) {
    let n = z.len();
    sig.clear();
    a.clear();
    a.resize(n, 0.0);
    da.clear();
    da.resize(nd * n, 0.0);
    for i in 0..n {
        let (s, ds, dds) = act.eval3(z[i]);
        sig.push([ds, dds]);
        a[i] = s;
        for k in 0..nd {
            da[k * n + i] = ds * dz[k * n + i];
        }
    }
}

/// In place: (∂/∂a, ∂/∂da) → (∂/∂z, ∂/∂dz) for `a = σ(z)`, `da = σ'(z) dz`.
fn activate_backward(sig: &[[f64; 2]], dz: &[f64], nd: usize, bar: &mut [f64], d_bar: &mut [f64]) {
    let n = sig.len();
    for i in 0..n {
        let [ds, dds] = sig[i];
        let mut zb = ds * bar[i];
        for k in 0..nd {
            let j = k * n + i;
            zb += dds * dz[j] * d_bar[j];
            d_bar[j] *= ds;
        }
        bar[i] = zb;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    if alpha == 0.0 {
        return;
    }
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Exact gradient of `objective` with respect to the parameters.
///
/// Two passes: a forward pass collects every site's jet so the objective's
/// pullback can see all of them; a second pass re-runs each site's forward
/// sweep and back-propagates its cotangent. Sites are visited in index
/// order, so the result is bit-reproducible.
pub fn param_gradient(net: &Network, objective: &dyn Objective) -> Vec<f64> {
    let sites = objective.sites();
    let mut ws = net.workspace();
    let (c, d) = (net.arch.output_dim, net.arch.input_dim);
    let jets: Vec<SpatialJet> = sites
        .iter()
        .map(|s| {
            let mut j = SpatialJet::zeros(c, if s.jet { d } else { 0 });
            net.forward(&mut ws, &s.x, s.jet);
            net.read_jet(&ws, &mut j);
            j
        })
        .collect();
    let mut cots: Vec<SpatialJet> =
        jets.iter().map(|j| SpatialJet { value: vec![0.0; j.value.len()], grad: vec![0.0; j.grad.len()] }).collect();
    objective.pullback(&jets, &mut cots);
    let mut grad = vec![0.0; net.params.len()];
    for (site, cot) in sites.iter().zip(&cots) {
        if cot.value.iter().chain(&cot.grad).all(|&v| v == 0.0) {
            continue;
        }
        net.forward(&mut ws, &site.x, site.jet);
        net.backward(&mut ws, site.jet, cot, &mut grad);
    }
    grad
}

/// Objective value at the network's current parameters.
pub fn objective_value(net: &Network, objective: &dyn Objective) -> f64 {
    let mut ws = net.workspace();
    let (c, d) = (net.arch.output_dim, net.arch.input_dim);
    let jets: Vec<SpatialJet> = objective
        .sites()
        .iter()
        .map(|s| {
            let mut j = SpatialJet::zeros(c, d);
            net.forward(&mut ws, &s.x, s.jet);
            net.read_jet(&ws, &mut j);
            j
        })
        .collect();
    objective.value(&jets)
}

/// Central-difference gradient, one parameter at a time.
pub fn finite_diff_param_gradient(net: &Network, objective: &dyn Objective, step: f64) -> Vec<f64> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut probe = net.clone();
    (0..net.params.len())
        .map(|i| {
            let orig = net.params[i];
            probe.params[i] = orig + step;
            let plus = objective_value(&probe, objective);
            probe.params[i] = orig - step;
            let minus = objective_value(&probe, objective);
            probe.params[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// A two-dimensional network seen as a [`Field`].
impl Field for Network {
    fn components(&self) -> usize {
        self.arch.output_dim
    }

    fn eval_into(&self, x: Point, value: &mut [f64]) {
        value.copy_from_slice(&self.eval(&x));
    }

    fn jet_into(&self, x: Point, value: &mut [f64], grad: &mut [f64]) {
        let jet = self.eval_jet(&x);
        value.copy_from_slice(&jet.value);
        grad.copy_from_slice(&jet.grad);
    }
}
