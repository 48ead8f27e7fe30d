//! Named parameter storage shared across modules.

use std::collections::BTreeMap;

use ndarray::ArrayD;

use crate::init::{init_tensor, Init};

#[derive(Debug, Clone)]
pub struct Param {
    pub value: ArrayD<f64>,
    pub trainable: bool,
}

/// All model parameters, keyed by dotted names (`"unet.down0.res0.conv1.w"`).
///
/// The leading name segment groups parameters by module, which is how
/// freeze/thaw and checkpoint grouping operate. BTreeMap keeps every
/// iteration order deterministic.
#[derive(Debug, Clone)]
pub struct ParamSet {
    seed: u64,
    entries: BTreeMap<String, Param>,
}

impl ParamSet {
    pub fn new(seed: u64) -> Self {
        ParamSet { seed, entries: BTreeMap::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Create the parameter on first use; later calls return the stored value.
    /// Initialization depends only on `(seed, name, shape, init)`.
    pub fn get_or_init(&mut self, name: &str, shape: &[usize], init: Init, trainable: bool) -> &Param {
        let seed = self.seed;
        self.entries.entry(name.to_string()).or_insert_with(|| Param {
            value: init_tensor(seed, name, shape, init),
            trainable,
        })
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.get_mut(name)
    }

    pub fn insert(&mut self, name: String, param: Param) {
        self.entries.insert(name, param);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Mark every parameter under a dotted prefix as frozen.
    pub fn freeze_prefix(&mut self, prefix: &str) {
        for (name, param) in self.entries.iter_mut() {
            if name == prefix || name.starts_with(&format!("{prefix}.")) {
                param.trainable = false;
            }
        }
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(n, _)| n.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn get_or_init_is_idempotent() {
        let mut ps = ParamSet::new(11);
        let first = ps.get_or_init("m.w", &[3, 3], Init::HeNormal, true).value.clone();
        let second = ps.get_or_init("m.w", &[3, 3], Init::Zeros, true).value.clone();
        assert_eq!(first, second);
    }

    #[test]
    fn freeze_prefix_only_touches_subtree() {
        let mut ps = ParamSet::new(0);
        ps.get_or_init("codec.enc.w", &[2], Init::Zeros, true);
        ps.get_or_init("codec.dec.w", &[2], Init::Zeros, true);
        ps.get_or_init("unet.in.w", &[2], Init::Zeros, true);
        ps.freeze_prefix("codec");
        assert!(!ps.get("codec.enc.w").unwrap().trainable);
        assert!(!ps.get("codec.dec.w").unwrap().trainable);
        assert!(ps.get("unet.in.w").unwrap().trainable);
        assert_eq!(ps.trainable_names(), vec!["unet.in.w".to_string()]);
    }
}
