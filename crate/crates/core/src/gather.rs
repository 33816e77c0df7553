use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Where a gather came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SourceMeta {
    pub line_id: String,
    /// Trace sequence numbers, one per trace; empty when unknown.
    pub trace_numbers: Vec<i32>,
}

/// A 2-D seismic section: `n_samples` time samples by `n_traces` traces,
/// stored row-major (one row per time sample).
#[derive(Clone, Debug, PartialEq)]
pub struct Gather {
    n_samples: usize,
    n_traces: usize,
    /// Sample interval in seconds.
    pub dt: f64,
    data: Vec<f32>,
    pub meta: SourceMeta,
    /// Amplitudes have been divided by this factor (1 when raw).
    pub scale: f64,
}

impl Gather {
    pub fn new(n_samples: usize, n_traces: usize, dt: f64, data: Vec<f32>) -> Result<Self> {
        if n_samples == 0 || n_traces == 0 {
            return Err(Error::usage(format!(
                "gather must be non-empty, got {n_samples}x{n_traces}"
            )));
        }
        if data.len() != n_samples * n_traces {
            return Err(Error::dim(format!(
                "{n_samples}x{n_traces} gather needs {} amplitudes, got {}",
                n_samples * n_traces,
                data.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::usage(format!("sample interval must be positive, got {dt}")));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::usage(format!(
                "non-finite amplitude at sample {} trace {}",
                i / n_traces,
                i % n_traces
            )));
        }
        Ok(Self {
            n_samples,
            n_traces,
            dt,
            data,
            meta: SourceMeta::default(),
            scale: 1.0,
        })
    }

    pub fn zeros(n_samples: usize, n_traces: usize, dt: f64) -> Result<Self> {
        Self::new(n_samples, n_traces, dt, vec![0.0; n_samples * n_traces])
    }

    /// Build from per-trace columns.
    pub fn from_traces(traces: &[Vec<f32>], dt: f64) -> Result<Self> {
        let n_traces = traces.len();
        let n_samples = traces.first().map_or(0, Vec::len);
        if traces.iter().any(|t| t.len() != n_samples) {
            return Err(Error::dim("traces differ in length"));
        }
        let mut data = vec![0.0; n_samples * n_traces];
        for (j, t) in traces.iter().enumerate() {
            for (i, &v) in t.iter().enumerate() {
                data[i * n_traces + j] = v;
            }
        }
        Self::new(n_samples, n_traces, dt, data)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_traces(&self) -> usize {
        self.n_traces
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_samples, self.n_traces)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, sample: usize, trace: usize) -> f32 {
        self.data[sample * self.n_traces + trace]
    }

    #[inline]
    pub fn set(&mut self, sample: usize, trace: usize, v: f32) {
        self.data[sample * self.n_traces + trace] = v;
    }

    pub fn trace(&self, j: usize) -> Vec<f32> {
        (0..self.n_samples).map(|i| self.get(i, j)).collect()
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    /// Copy with the amplitudes replaced, keeping metadata.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        let mut g = Self::new(self.n_samples, self.n_traces, self.dt, data)?;
        g.meta = self.meta.clone();
        g.scale = self.scale;
        Ok(g)
    }

    /// As a `[1, n_samples, n_traces]` network input.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(vec![1, self.n_samples, self.n_traces], self.data.clone())
            .expect("gather extents match")
    }

    /// Inverse of [`Gather::to_tensor`], taking metadata from `self`.
    pub fn from_tensor_like(&self, t: &Tensor<f32>) -> Result<Self> {
        if t.shape() != [1, self.n_samples, self.n_traces] {
            return Err(Error::dim(format!(
                "tensor {:?} does not match gather {}x{}",
                t.shape(),
                self.n_samples,
                self.n_traces
            )));
        }
        self.with_data(t.data().to_vec())
    }
}
