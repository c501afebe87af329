//! Path simulation for the mixed model.

use martrep_core::exec::ExecPolicy;
use martrep_core::mixed::{MixedModel, TripletValues};
use martrep_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

/// How `P(τ = s | η-information before s)` is read on shared atom times.
pub const CONDITIONING_READING: &str =
    "P(tau = s | sigma{eta = t}) is read as conditioning on whether eta = t occurred by time t, i.e. on the eta-state just before s";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Channel {
    W,
    IEta,
    ITau,
    M,
    H,
    HPrime,
    MH,
}

impl Channel {
    pub const ALL: [Channel; 7] = [
        Channel::W,
        Channel::IEta,
        Channel::ITau,
        Channel::M,
        Channel::H,
        Channel::HPrime,
        Channel::MH,
    ];
    pub const TRIPLET: [Channel; 3] = [Channel::M, Channel::HPrime, Channel::MH];

    pub fn name(self) -> &'static str {
        match self {
            Channel::W => "W",
            Channel::IEta => "ieta",
            Channel::ITau => "itau",
            Channel::M => "M",
            Channel::H => "H",
            Channel::HPrime => "H_prime",
            Channel::MH => "MH",
        }
    }

    pub fn parse(s: &str) -> Option<Channel> {
        match s {
            "W" => Some(Channel::W),
            "ieta" => Some(Channel::IEta),
            "itau" => Some(Channel::ITau),
            "M" => Some(Channel::M),
            "H" => Some(Channel::H),
            "H_prime" | "Hp" | "H'" => Some(Channel::HPrime),
            "MH" | "[M,H]" => Some(Channel::MH),
            _ => None,
        }
    }

    fn index(self) -> usize {
        Channel::ALL.iter().position(|c| *c == self).expect("listed")
    }

    pub fn of(self, v: &TripletValues) -> f64 {
        match self {
            Channel::W => v.w,
            Channel::IEta => v.ieta,
            Channel::ITau => v.itau,
            Channel::M => v.m,
            Channel::H => v.h,
            Channel::HPrime => v.h_prime,
            Channel::MH => v.mh,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub n: usize,
    pub dt: f64,
    pub seed: u64,
    pub policy: ExecPolicy,
}

impl SimConfig {
    pub fn new(n: usize, dt: f64, seed: u64) -> Self {
        SimConfig {
            n,
            dt,
            seed,
            policy: ExecPolicy::default(),
        }
    }
}

/// Step indices at which channels are stored: `0`, `T`, every jump time
/// `e` together with `e - dt`, and a uniform sub-grid when `τ` has a
/// density part.
pub fn record_steps(model: &MixedModel, dt: f64) -> Vec<usize> {
    let k = (model.horizon / dt).round() as usize;
    let step = |t: f64| (t / dt).round() as usize;
    let mut v = vec![0, k];
    for e in model.event_times() {
        let s = step(e);
        if s > 0 {
            v.push(s);
            v.push(s - 1);
        }
    }
    if model.has_tau_density() {
        v.extend((1..16).map(|j| step(model.horizon * j as f64 / 16.0)));
    }
    v.sort_unstable();
    v.dedup();
    v
}

/// `n` paths, channels stored at the record times.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBatch {
    pub n: usize,
    pub dt: f64,
    pub seed: u64,
    pub times: Vec<f64>,
    pub eta: Vec<f64>,
    pub tau: Vec<Option<f64>>,
    /// Path-major: `data[(path * times.len() + i) * 7 + channel]`.
    data: Vec<f64>,
}

impl PathBatch {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn value(&self, path: usize, time: usize, channel: Channel) -> f64 {
        self.data[(path * self.times.len() + time) * Channel::ALL.len() + channel.index()]
    }

    pub fn terminal(&self, path: usize, channel: Channel) -> f64 {
        self.value(path, self.times.len() - 1, channel)
    }

    pub fn increment(&self, path: usize, time: usize, channel: Channel) -> f64 {
        self.value(path, time, channel) - self.value(path, time - 1, channel)
    }

    /// Index of the first record time at or after `t`, `None` past `T`.
    fn observed_at(&self, t: Option<f64>) -> Option<usize> {
        let t = t?;
        self.times.iter().position(|&s| s >= t - 1e-9)
    }

    /// `G`-cell of a path at record time `i`: the record index at which
    /// `η` was observed, and the one at which `τ` was, or `-1` if not yet.
    pub fn cell(&self, path: usize, i: usize) -> (i32, i32) {
        let key = |obs: Option<usize>| match obs {
            Some(j) if j <= i => j as i32,
            _ => -1,
        };
        (key(self.observed_at(Some(self.eta[path]))), key(self.observed_at(self.tau[path])))
    }
}

fn draw_eta(model: &MixedModel, u: f64) -> usize {
    let mut acc = 0.0;
    for (i, (_, p)) in model.eta.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    model.eta.len() - 1
}

/// Deterministic given the seed: path `i` uses stream `i` of a ChaCha8
/// generator, so the batch does not depend on the thread count.
pub fn simulate(model: &MixedModel, cfg: &SimConfig) -> Result<PathBatch> {
    if cfg.n == 0 {
        return Err(Error::Contract("need at least one path".into()));
    }
    model.validate()?;
    model.check_commensurate(cfg.dt)?;
    let steps = record_steps(model, cfg.dt);
    let times: Vec<f64> = steps.iter().map(|&s| s as f64 * cfg.dt).collect();
    let k = *steps.last().expect("nonempty");
    let sqrt_dt = cfg.dt.sqrt();
    let paths = cfg.policy.map_range(cfg.n, |path| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(path as u64);
        let ie = draw_eta(model, rng.random::<f64>());
        let eta = model.eta[ie].0;
        let tau = model.tau_given_eta[ie].quantile(rng.random::<f64>());
        let mut w = 0.0;
        let mut out = Vec::with_capacity(steps.len() * Channel::ALL.len());
        let mut next = 0;
        for s in 0..=k {
            if s > 0 && model.brownian {
                let z: f64 = rng.sample(StandardNormal);
                w += sqrt_dt * z;
            }
            if steps[next] == s {
                let v = model.evaluate(s as f64 * cfg.dt, w, eta, tau);
                out.extend(Channel::ALL.iter().map(|c| c.of(&v)));
                next += 1;
            }
        }
        (eta, tau, out)
    });
    let mut batch = PathBatch {
        n: cfg.n,
        dt: cfg.dt,
        seed: cfg.seed,
        times,
        eta: Vec::with_capacity(cfg.n),
        tau: Vec::with_capacity(cfg.n),
        data: Vec::with_capacity(cfg.n * steps.len() * Channel::ALL.len()),
    };
    for (eta, tau, out) in paths {
        batch.eta.push(eta);
        batch.tau.push(tau);
        batch.data.extend(out);
    }
    Ok(batch)
}
