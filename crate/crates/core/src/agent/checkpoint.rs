use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentBundle, Hyperparams, Optimizers};
use crate::error::{Error, Result};
use crate::nn::{Mlp, NetCheckpoint};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub hyperparams: Hyperparams,
    #[serde(rename = "M_hist")]
    pub mask_history: Vec<f64>,
    pub pool_fingerprint: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub reward_scale: f64,
    pub train_steps: u64,
    pub selector_updates: u64,
}

const NET_NAMES: [&str; 12] = [
    "actor",
    "actor_target",
    "critic1",
    "critic2",
    "critic1_target",
    "critic2_target",
    "baseline1",
    "baseline2",
    "baseline1_target",
    "baseline2_target",
    "selector",
    "selector_target",
];

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value).expect("checkpoint values serialize");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

impl AgentBundle {
    fn nets(&self) -> [&Mlp; 12] {
        [
            &self.actor,
            &self.actor_target,
            &self.critics[0],
            &self.critics[1],
            &self.critic_targets[0],
            &self.critic_targets[1],
            &self.baselines[0],
            &self.baselines[1],
            &self.baseline_targets[0],
            &self.baseline_targets[1],
            &self.selector,
            &self.selector_target,
        ]
    }

    /// Writes one JSON file per network plus `manifest.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, pool_fingerprint: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, net) in NET_NAMES.iter().zip(self.nets()) {
            write_json(&dir.join(format!("{name}.json")), &net.to_checkpoint())?;
        }
        write_json(
            &dir.join(MANIFEST_FILE),
            &BundleManifest {
                hyperparams: self.hyper.clone(),
                mask_history: self.mask_history.clone(),
                pool_fingerprint: pool_fingerprint.to_string(),
                state_dim: self.state_dim,
                action_dim: self.action_dim,
                reward_scale: self.reward_scale,
                train_steps: self.train_steps,
                selector_updates: self.selector_updates,
            },
        )
    }

    /// Restores a bundle saved by [`AgentBundle::save`]. Optimizer moments
    /// are not persisted and restart from zero.
    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, BundleManifest)> {
        let dir = dir.as_ref();
        let manifest: BundleManifest = read_json(&dir.join(MANIFEST_FILE))?;
        manifest.hyperparams.validate()?;
        if manifest.mask_history.len() != manifest.action_dim
            || manifest.mask_history.iter().any(|m| !(0.0..=1.0).contains(m))
        {
            return Err(Error::Checkpoint("mask history is malformed".into()));
        }
        let mut nets = Vec::with_capacity(NET_NAMES.len());
        for name in NET_NAMES {
            let cp: NetCheckpoint = read_json(&dir.join(format!("{name}.json")))?;
            nets.push(Mlp::from_checkpoint(&cp)?);
        }
        let [actor, actor_target, c1, c2, ct1, ct2, b1, b2, bt1, bt2, selector, selector_target]: [Mlp; 12] =
            nets.try_into().expect("twelve networks");
        let (s, k) = (manifest.state_dim, manifest.action_dim);
        let expect = |net: &Mlp, input: usize, output: usize, name: &str| {
            if net.input_dim() != input || net.output_dim() != output {
                Err(Error::Checkpoint(format!("{name} has the wrong shape")))
            } else {
                Ok(())
            }
        };
        for (net, name) in [(&actor, "actor"), (&actor_target, "actor_target")] {
            expect(net, s, k, name)?;
        }
        for net in [&c1, &c2, &ct1, &ct2, &b1, &b2, &bt1, &bt2] {
            expect(net, s + k, 1, "critic")?;
        }
        for net in [&selector, &selector_target] {
            expect(net, s + k, k, "selector")?;
        }
        let critics = [c1, c2];
        let optim = Optimizers::new(&actor, &critics, &selector, manifest.hyperparams.learning_rate);
        let bundle = AgentBundle {
            hyper: manifest.hyperparams.clone(),
            state_dim: s,
            action_dim: k,
            actor,
            actor_target,
            critics,
            critic_targets: [ct1, ct2],
            baselines: [b1, b2],
            baseline_targets: [bt1, bt2],
            selector,
            selector_target,
            mask_history: manifest.mask_history.clone(),
            action_exist: vec![false; k],
            reward_scale: manifest.reward_scale,
            train_steps: manifest.train_steps,
            selector_updates: manifest.selector_updates,
            optim,
        };
        Ok((bundle, manifest))
    }
}
