//! Measurement oracles over known plants, additive Gaussian noise and the
//! JSON model file format.

use std::fs;
use std::path::Path;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greedy::FrequencyOracle;
use crate::lti::{Domain, StateSpace};

/// One oracle query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallRecord {
    pub point: Complex64,
    pub value: Complex64,
}

/// Plant-backed oracle returning `H(σ) + η`, where the real and imaginary
/// parts of `η` are independent `N(0, noise_std²)` draws from a seeded
/// stream. Every query is appended to the call log.
#[derive(Debug, Clone)]
pub struct Oracle {
    model: StateSpace,
    noise: Option<Normal<f64>>,
    noise_std: f64,
    rng: ChaCha8Rng,
    seed: u64,
    call_log: Vec<CallRecord>,
}

impl Oracle {
    pub fn new(model: StateSpace, noise_std: f64, seed: u64) -> Result<Self> {
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "noise standard deviation {noise_std} must be finite and nonnegative"
            )));
        }
        let noise = if noise_std > 0.0 {
            Some(Normal::new(0.0, noise_std).expect("validated std"))
        } else {
            None
        };
        Ok(Oracle {
            model,
            noise,
            noise_std,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            call_log: Vec::new(),
        })
    }

    pub fn noiseless(model: StateSpace) -> Self {
        Self::new(model, 0.0, 0).expect("zero noise is valid")
    }

    pub fn model(&self) -> &StateSpace {
        &self.model
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn call_log(&self) -> &[CallRecord] {
        &self.call_log
    }

    pub fn calls(&self) -> usize {
        self.call_log.len()
    }

    pub fn measure(&mut self, s: Complex64) -> Result<Complex64> {
        let mut h = self.model.eval_tf(s)?;
        if let Some(noise) = &self.noise {
            let re = noise.sample(&mut self.rng);
            let im = noise.sample(&mut self.rng);
            h += Complex64::new(re, im);
        }
        self.call_log.push(CallRecord { point: s, value: h });
        Ok(h)
    }

    /// Writes the call log as `index,omega,h_re,h_im`.
    pub fn write_call_log(&self, path: &Path) -> Result<()> {
        write_call_log(&self.call_log, path)
    }
}

impl FrequencyOracle for Oracle {
    fn measure(&mut self, s: Complex64) -> Result<Complex64> {
        Oracle::measure(self, s)
    }
}

pub fn write_call_log(log: &[CallRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "omega", "h_re", "h_im"])?;
    for (i, rec) in log.iter().enumerate() {
        w.write_record([
            i.to_string(),
            rec.point.im.to_string(),
            rec.value.re.to_string(),
            rec.value.im.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Thread-safe adapter: queries take a lock, so the budget count stays
/// exact while the log order follows lock acquisition.
#[derive(Debug)]
pub struct SyncOracle(Mutex<Oracle>);

impl SyncOracle {
    pub fn new(oracle: Oracle) -> Self {
        SyncOracle(Mutex::new(oracle))
    }

    pub fn measure(&self, s: Complex64) -> Result<Complex64> {
        self.0.lock().expect("oracle lock poisoned").measure(s)
    }

    pub fn into_inner(self) -> Oracle {
        self.0.into_inner().expect("oracle lock poisoned")
    }
}

impl FrequencyOracle for &SyncOracle {
    fn measure(&mut self, s: Complex64) -> Result<Complex64> {
        SyncOracle::measure(self, s)
    }

    fn is_concurrent(&self) -> bool {
        true
    }
}

type Pair = [f64; 2];

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    order: usize,
    domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sample_time: Option<f64>,
    #[serde(rename = "E")]
    e: Vec<Vec<Pair>>,
    #[serde(rename = "A")]
    a: Vec<Vec<Pair>>,
    #[serde(rename = "B")]
    b: Vec<Vec<Pair>>,
    #[serde(rename = "C")]
    c: Vec<Vec<Pair>>,
    #[serde(rename = "D")]
    d: Vec<Vec<Pair>>,
}

fn to_file(m: &StateSpace) -> ModelFile {
    let mat = |x: &DMatrix<Complex64>| -> Vec<Vec<Pair>> {
        (0..x.nrows())
            .map(|i| (0..x.ncols()).map(|j| [x[(i, j)].re, x[(i, j)].im]).collect())
            .collect()
    };
    ModelFile {
        order: m.order(),
        domain: m.domain,
        sample_time: m.sample_time,
        e: mat(&m.e),
        a: mat(&m.a),
        b: m.b.iter().map(|v| vec![[v.re, v.im]]).collect(),
        c: vec![m.c.iter().map(|v| [v.re, v.im]).collect()],
        d: vec![vec![[m.d.re, m.d.im]]],
    }
}

fn shape_err(field: &str, rows: usize, cols: usize, expect: (usize, usize)) -> Error {
    Error::DimensionMismatch(format!(
        "{field} is {rows}x{cols}, expected {}x{}",
        expect.0, expect.1
    ))
}

fn matrix(field: &str, rows: &[Vec<Pair>], expect: (usize, usize)) -> Result<DMatrix<Complex64>> {
    if rows.len() != expect.0 {
        let cols = rows.first().map_or(0, |r| r.len());
        return Err(shape_err(field, rows.len(), cols, expect));
    }
    for r in rows {
        if r.len() != expect.1 {
            return Err(shape_err(field, rows.len(), r.len(), expect));
        }
    }
    Ok(DMatrix::from_fn(expect.0, expect.1, |i, j| {
        let [re, im] = rows[i][j];
        Complex64::new(re, im)
    }))
}

fn from_file(f: ModelFile) -> Result<StateSpace> {
    let n = f.order;
    let e = matrix("E", &f.e, (n, n))?;
    let a = matrix("A", &f.a, (n, n))?;
    let b = matrix("B", &f.b, (n, 1))?;
    let c = matrix("C", &f.c, (1, n))?;
    let d = matrix("D", &f.d, (1, 1))?;
    if f.domain == Domain::Discrete && f.sample_time.is_none_or(|t| !(t > 0.0)) {
        return Err(Error::Parse {
            line: 0,
            field: "sample_time".into(),
            msg: "discrete models need a positive sample_time".into(),
        });
    }
    let mut m = StateSpace::new(
        e,
        a,
        DVector::from_iterator(n, b.iter().copied()),
        DVector::from_iterator(n, c.iter().copied()),
        d[(0, 0)],
    )?;
    m.domain = f.domain;
    m.sample_time = f.sample_time;
    Ok(m)
}

/// Serializes a model to the JSON model-file schema.
pub fn model_to_json(m: &StateSpace) -> String {
    serde_json::to_string_pretty(&to_file(m)).expect("model file is serializable")
}

pub fn model_from_json(text: &str) -> Result<StateSpace> {
    let f: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        field: field_hint(&e.to_string()),
        msg: e.to_string(),
    })?;
    from_file(f)
}

fn field_hint(msg: &str) -> String {
    msg.split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "document".to_string())
}

pub fn save_model(m: &StateSpace, path: &Path) -> Result<()> {
    fs::write(path, model_to_json(m))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<StateSpace> {
    model_from_json(&fs::read_to_string(path)?)
}
