//! Run manifests: what was run, with which resolved config, producing which files.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use occsim_core::config::ConfigMap;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Manifest path for a primary output: `<output>.manifest`.
pub fn manifest_path(primary: &Path) -> std::path::PathBuf {
    let mut name = primary.as_os_str().to_owned();
    name.push(".manifest");
    name.into()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Command arguments other than the config.
    pub args: ConfigMap,
    pub config: ConfigMap,
    /// File names, relative to the manifest's directory, in write order.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut map = ConfigMap::default();
        map.set("command", &self.command);
        map.set("version", &self.version);
        map.set(
            "seed",
            self.seed
                .map_or_else(|| "none".to_string(), |s| s.to_string()),
        );
        map.set("outputs", self.outputs.join(","));
        for (k, v) in self.args.entries() {
            map.set(format!("arg.{k}"), v);
        }
        for (k, v) in self.config.entries() {
            map.set(format!("config.{k}"), v);
        }
        format!("# occsim run manifest\n{}", map.to_text())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let map = ConfigMap::parse(text)?;
        let field = |k: &str| {
            map.get(k)
                .map(str::to_string)
                .ok_or_else(|| anyhow!("manifest has no `{k}` entry"))
        };
        let seed = match field("seed")?.as_str() {
            "none" => None,
            s => Some(s.parse().with_context(|| format!("manifest seed {s:?}"))?),
        };
        let outputs: Vec<String> = field("outputs")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        if outputs.is_empty() {
            bail!("manifest lists no outputs");
        }
        let mut args = ConfigMap::default();
        let mut config = ConfigMap::default();
        for (k, v) in map.entries() {
            if let Some(k) = k.strip_prefix("arg.") {
                args.set(k, v);
            } else if let Some(k) = k.strip_prefix("config.") {
                config.set(k, v);
            }
        }
        Ok(Self {
            command: field("command")?,
            version: field("version")?,
            seed,
            args,
            config,
            outputs,
        })
    }
}
