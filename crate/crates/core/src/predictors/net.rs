use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{glorot_bound, Graph, ParamSet, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::physics::{ForceMap, WorldState};
use crate::render::{glimpse, render_frame_centric, Image, STACK_DEPTH};
use crate::seed::rng;

/// Forces are divided by this before entering the network.
pub const FORCE_SCALE: f64 = 80_000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// One network per ball, fed glimpses centred on that ball.
    Oc,
    /// One network per frame, fed the whole table and all forces.
    Fc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub horizon: usize,
    pub resolution: usize,
    /// World pixels covered by an object-centric glimpse.
    pub glimpse_size: f64,
    /// Ball slots of the frame-centric head.
    pub max_balls: usize,
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub encoder: usize,
    pub hidden: usize,
    pub force_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::oc()
    }
}

impl ModelConfig {
    pub fn oc() -> Self {
        ModelConfig {
            kind: ModelKind::Oc,
            horizon: 20,
            resolution: 32,
            glimpse_size: 320.0,
            max_balls: 1,
            conv_channels: vec![8, 16, 16, 16],
            kernel: 3,
            stride: 2,
            encoder: 64,
            hidden: 64,
            force_scale: FORCE_SCALE,
        }
    }

    pub fn fc(max_balls: usize) -> Self {
        ModelConfig { kind: ModelKind::Fc, max_balls, ..Self::oc() }
    }

    pub fn slots(&self) -> usize {
        match self.kind {
            ModelKind::Oc => 1,
            ModelKind::Fc => self.max_balls,
        }
    }

    pub fn force_inputs(&self) -> usize {
        2 * self.slots()
    }

    pub fn outputs(&self) -> usize {
        2 * self.horizon * self.slots()
    }

    /// Spatial side after each conv layer.
    pub fn conv_sides(&self) -> Result<Vec<usize>> {
        let mut side = self.resolution;
        let mut out = Vec::new();
        for _ in &self.conv_channels {
            if side < self.kernel {
                return Err(Error::InvalidConfig(format!(
                    "resolution {} too small for {} conv layers",
                    self.resolution,
                    self.conv_channels.len()
                )));
            }
            side = (side - self.kernel) / self.stride + 1;
            out.push(side);
        }
        Ok(out)
    }

    pub fn conv_features(&self) -> Result<usize> {
        let sides = self.conv_sides()?;
        let last = sides.last().copied().unwrap_or(self.resolution);
        let ch = self.conv_channels.last().copied().unwrap_or(STACK_DEPTH);
        Ok(ch * last * last)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if self.kernel == 0 || self.stride == 0 || self.encoder == 0 || self.hidden == 0 {
            return bad("layer sizes must be positive");
        }
        if self.max_balls == 0 {
            return bad("max_balls must be positive");
        }
        if !(self.glimpse_size > 0.0) || !(self.force_scale > 0.0) {
            return bad("glimpse_size and force_scale must be positive");
        }
        if self.resolution < crate::render::MIN_RESOLUTION {
            return bad("resolution below renderer minimum");
        }
        self.conv_sides().map(|_| ())
    }
}

/// Recurrent state of the two LSTM layers.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h1: Tensor,
    pub c1: Tensor,
    pub h2: Tensor,
    pub c2: Tensor,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        let z = Tensor::zeros(&[hidden]);
        LstmState { h1: z.clone(), c1: z.clone(), h2: z.clone(), c2: z }
    }
}

/// Recurrent state as graph handles.
#[derive(Clone, Copy, Debug)]
pub struct StateVars {
    pub h1: Var,
    pub c1: Var,
    pub h2: Var,
    pub c2: Var,
}

impl StateVars {
    pub fn input(g: &mut Graph, s: &LstmState) -> Self {
        StateVars { h1: g.input(s.h1.clone()), c1: g.input(s.c1.clone()), h2: g.input(s.h2.clone()), c2: g.input(s.c2.clone()) }
    }

    pub fn read(&self, g: &Graph) -> LstmState {
        LstmState {
            h1: g.value(self.h1).clone(),
            c1: g.value(self.c1).clone(),
            h2: g.value(self.h2).clone(),
            c2: g.value(self.c2).clone(),
        }
    }
}

/// Architecture plus weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
}

fn conv_name(i: usize) -> String {
    format!("conv{}.w", i + 1)
}

impl Model {
    /// Random initialisation: Glorot-uniform weights, zero biases, forget bias +1.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng(seed);
        let mut p = ParamSet::new();
        let k2 = config.kernel * config.kernel;
        let mut cin = STACK_DEPTH;
        for (i, &cout) in config.conv_channels.iter().enumerate() {
            let b = glorot_bound(cin * k2, cout * k2);
            p.uniform(conv_name(i), &[cout, cin, config.kernel, config.kernel], b, &mut r)?;
            cin = cout;
        }
        let enc_in = config.conv_features()? + config.force_inputs();
        p.uniform("enc.w", &[config.encoder, enc_in], glorot_bound(enc_in, config.encoder), &mut r)?;
        p.zeros("enc.b", &[config.encoder])?;
        let h = config.hidden;
        for (name, xin) in [("lstm1", config.encoder), ("lstm2", h + config.encoder)] {
            p.uniform(format!("{name}.w_ih"), &[4 * h, xin], glorot_bound(xin, h), &mut r)?;
            p.uniform(format!("{name}.w_hh"), &[4 * h, h], glorot_bound(h, h), &mut r)?;
            let mut bias = vec![0.0; 4 * h];
            bias[h..2 * h].fill(1.0);
            p.insert(format!("{name}.b"), Tensor::vector(bias))?;
        }
        let out = config.outputs();
        p.uniform("dec.w", &[out, 2 * h], glorot_bound(2 * h, out), &mut r)?;
        p.zeros("dec.b", &[out])?;
        Ok(Model { config, params: p })
    }

    pub fn descriptor(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.config)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.params.save(path, &self.descriptor()?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.params.write_checkpoint(&mut out, &self.descriptor()?)?;
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (desc, params) = ParamSet::load(path)?;
        Self::from_parts(&desc, params)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (desc, params) = ParamSet::read_checkpoint(bytes)?;
        Self::from_parts(&desc, params)
    }

    fn from_parts(desc: &str, params: ParamSet) -> Result<Self> {
        let config: ModelConfig = serde_json::from_str(desc)?;
        let mut model = Model::new(config, 0)?;
        model.params.load_from(&params)?;
        Ok(model)
    }

    /// Copies weights from a model with the same architecture.
    pub fn init_from(&mut self, other: &Model) -> Result<()> {
        if other.config != self.config {
            return Err(Error::ShapeMismatch("architecture differs between models".into()));
        }
        self.params.load_from(&other.params)
    }

    /// One recurrent step: `image` is `[4, R, R]`, `force` is already scaled.
    pub fn step(&self, g: &mut Graph, image: Var, force: Var, state: StateVars) -> Result<(Var, StateVars)> {
        let cfg = &self.config;
        let mut x = image;
        for i in 0..cfg.conv_channels.len() {
            let k = g.param(&conv_name(i))?;
            let z = g.conv2d(x, k, cfg.stride)?;
            x = g.relu(z);
        }
        let feat = g.concat(&[x, force])?;
        let (w, b) = (g.param("enc.w")?, g.param("enc.b")?);
        let e = g.linear(feat, w, b)?;
        let e = g.relu(e);
        let (wi, wh, b1) = (g.param("lstm1.w_ih")?, g.param("lstm1.w_hh")?, g.param("lstm1.b")?);
        let (h1, c1) = g.lstm_cell(e, state.h1, state.c1, wi, wh, b1)?;
        let x2 = g.concat(&[h1, e])?;
        let (wi, wh, b2) = (g.param("lstm2.w_ih")?, g.param("lstm2.w_hh")?, g.param("lstm2.b")?);
        let (h2, c2) = g.lstm_cell(x2, state.h2, state.c2, wi, wh, b2)?;
        let d = g.concat(&[h1, h2])?;
        let (w, b) = (g.param("dec.w")?, g.param("dec.b")?);
        let out = g.linear(d, w, b)?;
        Ok((out, StateVars { h1, c1, h2, c2 }))
    }

    /// Image seen by this model for one ball (OC) or the whole table (FC).
    pub fn render(&self, state: &WorldState, ball_id: usize) -> Result<Image> {
        match self.config.kind {
            ModelKind::Oc => glimpse(state, ball_id, self.config.glimpse_size, self.config.resolution),
            ModelKind::Fc => render_frame_centric(state, self.config.resolution),
        }
    }

    /// Scaled force input; `ball_ids` lists the balls in slot order.
    pub fn force_input(&self, forces: &ForceMap, ball_ids: &[usize]) -> Tensor {
        let mut v = vec![0.0; self.config.force_inputs()];
        for (slot, id) in ball_ids.iter().take(self.config.slots()).enumerate() {
            let f = forces.get(id).copied().unwrap_or(Vec2::ZERO);
            v[2 * slot] = f.x / self.config.force_scale;
            v[2 * slot + 1] = f.y / self.config.force_scale;
        }
        Tensor::vector(v)
    }
}

/// Stacks four single-channel frames, oldest first, into `[4, R, R]`.
pub fn stack_tensor(frames: &[&Image]) -> Result<Tensor> {
    let Some(first) = frames.first() else {
        return Err(Error::ShapeMismatch("empty frame stack".into()));
    };
    let (w, h) = (first.width, first.height);
    let mut data = Vec::with_capacity(frames.len() * w * h);
    for f in frames {
        if f.width != w || f.height != h || f.channels != 1 {
            return Err(Error::ShapeMismatch("frames differ in size or channels".into()));
        }
        data.extend_from_slice(&f.pixels);
    }
    Tensor::new(vec![frames.len(), h, w], data)
}
