use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total assignment of reals to a declared variable set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    values: BTreeMap<String, f64>,
}

impl State {
    pub fn new() -> Self {
        State::default()
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Self {
        State { values: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect() }
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.values.get(name).copied().ok_or_else(|| Error::Undeclared(name.to_string()))
    }

    pub fn try_get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    /// Sets (or declares) `name`.
    pub fn set(&mut self, name: impl Into<String>, v: f64) {
        self.values.insert(name.into(), v);
    }

    pub fn with(mut self, name: impl Into<String>, v: f64) -> Self {
        self.set(name, v);
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_domain(&self, other: &State) -> bool {
        self.values.len() == other.values.len() && self.values.keys().all(|k| other.values.contains_key(k))
    }

    /// Largest absolute difference over the given names.
    pub fn max_diff<'a>(&self, other: &State, names: impl IntoIterator<Item = &'a str>) -> Result<f64> {
        let mut d: f64 = 0.0;
        for n in names {
            d = d.max((self.get(n)? - other.get(n)?).abs());
        }
        Ok(d)
    }
}

/// A pre state for plain variables and a post state for `x_post`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionPair {
    pub pre: State,
    pub post: State,
}

impl TransitionPair {
    pub fn new(pre: State, post: State) -> Result<Self> {
        if let Some(missing) = pre
            .names()
            .find(|n| !post.contains(n))
            .or_else(|| post.names().find(|n| !pre.contains(n)))
        {
            return Err(Error::Undeclared(missing.to_string()));
        }
        Ok(TransitionPair { pre, post })
    }

    pub fn identity(s: State) -> Self {
        TransitionPair { pre: s.clone(), post: s }
    }
}
