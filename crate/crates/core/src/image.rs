use crate::error::{check_finite, InvError, Result};

/// Row-major single-channel image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(InvError::InvalidSpec(format!("image dims must be positive, got {height}x{width}")));
        }
        if data.len() != height * width {
            return Err(InvError::DimensionMismatch { expected: height * width, got: data.len() });
        }
        check_finite("image", &data)?;
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0);
        Self { height, width, data: vec![value; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..height * width).map(|k| f(k / width, k % width)).collect();
        Self { height, width, data }
    }

    /// 1×n image; convenient for 1-D signals.
    pub fn row(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(1, n, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.width + j] = v;
    }

    /// Same dims, new data.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.height, self.width, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { height: self.height, width: self.width, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

/// Measurement vector together with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    pub data: Vec<f64>,
    /// Identifier of the producing operator kind.
    pub operator: String,
    pub sigma: f64,
}

impl MeasurementVector {
    pub fn new(data: Vec<f64>, operator: impl Into<String>) -> Self {
        Self { data, operator: operator.into(), sigma: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}
