use std::sync::Arc;

use rand::Rng;
use serde_json::{Map, Value as Json};

use super::HpoError;

#[derive(Debug, Clone, PartialEq)]
pub enum Dimension {
    Integer { lo: i64, hi: i64 },
    Real { lo: f64, hi: f64 },
    Categorical { choices: Vec<String> },
}

impl Dimension {
    /// Number of encoded coordinates.
    pub fn width(&self) -> usize {
        match self {
            Dimension::Categorical { choices } => choices.len(),
            _ => 1,
        }
    }

    fn default_value(&self) -> Value {
        match self {
            Dimension::Integer { lo, .. } => Value::Int(*lo),
            Dimension::Real { lo, .. } => Value::Real(*lo),
            Dimension::Categorical { .. } => Value::Cat(0),
        }
    }
}

/// Raw value of one dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    /// Index into the choices.
    Cat(usize),
}

impl Value {
    pub fn as_f64(self) -> f64 {
        match self {
            Value::Int(v) => v as f64,
            Value::Real(v) => v,
            Value::Cat(v) => v as f64,
        }
    }
}

type ActivityFn = dyn Fn(&[Value]) -> Vec<bool> + Send + Sync;

/// Mixed integer/real/categorical search space with conditional activity.
#[derive(Clone)]
pub struct ParamSpace {
    pub names: Vec<String>,
    pub dims: Vec<Dimension>,
    activity: Option<Arc<ActivityFn>>,
}

impl std::fmt::Debug for ParamSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParamSpace")
            .field("names", &self.names)
            .field("dims", &self.dims)
            .finish_non_exhaustive()
    }
}

impl ParamSpace {
    pub fn new(dims: Vec<(&str, Dimension)>) -> Self {
        let (names, dims) = dims.into_iter().map(|(n, d)| (n.to_string(), d)).unzip();
        Self {
            names,
            dims,
            activity: None,
        }
    }

    /// Installs a predicate giving the active flag of every dimension.
    pub fn with_activity(mut self, f: impl Fn(&[Value]) -> Vec<bool> + Send + Sync + 'static) -> Self {
        self.activity = Some(Arc::new(f));
        self
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Length of encoded vectors.
    pub fn encoded_len(&self) -> usize {
        self.dims.iter().map(Dimension::width).sum()
    }

    pub fn active(&self, values: &[Value]) -> Vec<bool> {
        match &self.activity {
            Some(f) => f(values),
            None => vec![true; self.dims.len()],
        }
    }

    /// Resets inactive dimensions to their defaults (lower bound or first
    /// choice).
    pub fn canonical(&self, values: &[Value]) -> Vec<Value> {
        let active = self.active(values);
        values
            .iter()
            .zip(&self.dims)
            .zip(active)
            .map(|((&v, d), a)| if a { v } else { d.default_value() })
            .collect()
    }

    pub fn check(&self, values: &[Value]) -> Result<(), HpoError> {
        if values.len() != self.dims.len() {
            return Err(HpoError::Range(format!("{} values for {} dimensions", values.len(), self.dims.len())));
        }
        let active = self.active(values);
        for (((name, d), v), a) in self.names.iter().zip(&self.dims).zip(values).zip(active) {
            if !a {
                continue;
            }
            let ok = match (d, v) {
                (Dimension::Integer { lo, hi }, Value::Int(x)) => lo <= x && x <= hi,
                (Dimension::Real { lo, hi }, Value::Real(x)) => *lo <= *x && *x <= *hi,
                (Dimension::Categorical { choices }, Value::Cat(i)) => *i < choices.len(),
                _ => false,
            };
            if !ok {
                return Err(HpoError::Range(format!("{name} = {v:?} outside {d:?}")));
            }
        }
        Ok(())
    }

    /// Maps raw values into the unit hypercube; inactive coordinates are 0.5.
    pub fn encode(&self, values: &[Value]) -> Result<Vec<f64>, HpoError> {
        self.check(values)?;
        let active = self.active(values);
        let mut x = Vec::with_capacity(self.encoded_len());
        for ((d, v), a) in self.dims.iter().zip(values).zip(active) {
            if !a {
                x.extend(std::iter::repeat_n(0.5, d.width()));
                continue;
            }
            match (d, v) {
                (Dimension::Integer { lo, hi }, Value::Int(i)) => {
                    x.push(if hi > lo { (i - lo) as f64 / (hi - lo) as f64 } else { 0.0 })
                }
                (Dimension::Real { lo, hi }, Value::Real(r)) => {
                    x.push(if hi > lo { (r - lo) / (hi - lo) } else { 0.0 })
                }
                (Dimension::Categorical { choices }, Value::Cat(c)) => {
                    x.extend((0..choices.len()).map(|k| if k == *c { 1.0 } else { 0.0 }))
                }
                _ => unreachable!("checked above"),
            }
        }
        Ok(x)
    }

    /// Inverse of [`ParamSpace::encode`]: reals unscaled, integers rounded,
    /// categoricals by argmax (first on ties), inactive dimensions reset.
    pub fn decode(&self, x: &[f64]) -> Result<Vec<Value>, HpoError> {
        if x.len() != self.encoded_len() {
            return Err(HpoError::Range(format!("encoded length {} != {}", x.len(), self.encoded_len())));
        }
        let mut values = Vec::with_capacity(self.dims.len());
        let mut pos = 0;
        for d in &self.dims {
            let v = match d {
                Dimension::Integer { lo, hi } => {
                    let u = x[pos].clamp(0.0, 1.0);
                    let r = (*lo as f64 + u * (hi - lo) as f64).round() as i64;
                    Value::Int(r.clamp(*lo, *hi))
                }
                Dimension::Real { lo, hi } => Value::Real((lo + x[pos].clamp(0.0, 1.0) * (hi - lo)).clamp(*lo, *hi)),
                Dimension::Categorical { choices } => {
                    let block = &x[pos..pos + choices.len()];
                    let mut best = 0;
                    for (k, &b) in block.iter().enumerate() {
                        if b > block[best] {
                            best = k;
                        }
                    }
                    Value::Cat(best)
                }
            };
            pos += d.width();
            values.push(v);
        }
        Ok(self.canonical(&values))
    }

    /// Uniform draw over every dimension, then canonicalized.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<Value> {
        let values: Vec<Value> = self
            .dims
            .iter()
            .map(|d| match d {
                Dimension::Integer { lo, hi } => Value::Int(rng.random_range(*lo..=*hi)),
                Dimension::Real { lo, hi } => Value::Real(rng.random_range(*lo..=*hi)),
                Dimension::Categorical { choices } => Value::Cat(rng.random_range(0..choices.len())),
            })
            .collect();
        self.canonical(&values)
    }

    /// Flat JSON object keyed by dimension name; inactive values are null.
    pub fn to_json(&self, values: &[Value]) -> Json {
        let active = self.active(values);
        let mut map = Map::new();
        for (((name, d), v), a) in self.names.iter().zip(&self.dims).zip(values).zip(active) {
            let j = if !a {
                Json::Null
            } else {
                match (d, v) {
                    (Dimension::Categorical { choices }, Value::Cat(c)) => Json::String(choices[*c].clone()),
                    (_, Value::Int(i)) => Json::from(*i),
                    (_, Value::Real(r)) => Json::from(*r),
                    (_, Value::Cat(c)) => Json::from(*c),
                }
            };
            map.insert(name.clone(), j);
        }
        Json::Object(map)
    }

    /// Inverse of [`ParamSpace::to_json`]; null or missing keys take defaults.
    pub fn from_json(&self, j: &Json) -> Result<Vec<Value>, HpoError> {
        let obj = j
            .as_object()
            .ok_or_else(|| HpoError::Range("parameters must be a JSON object".into()))?;
        let mut values = Vec::with_capacity(self.dims.len());
        for (name, d) in self.names.iter().zip(&self.dims) {
            let field = obj.get(name).unwrap_or(&Json::Null);
            let bad = || HpoError::Range(format!("bad value for {name}: {field}"));
            let v = match (d, field) {
                (_, Json::Null) => d.default_value(),
                (Dimension::Integer { .. }, f) => Value::Int(f.as_i64().ok_or_else(bad)?),
                (Dimension::Real { .. }, f) => Value::Real(f.as_f64().ok_or_else(bad)?),
                (Dimension::Categorical { choices }, Json::String(s)) => {
                    Value::Cat(choices.iter().position(|c| c == s).ok_or_else(bad)?)
                }
                _ => return Err(bad()),
            };
            values.push(v);
        }
        let values = self.canonical(&values);
        self.check(&values)?;
        Ok(values)
    }
}
