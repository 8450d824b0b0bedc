//! TOML run configuration. Relative paths resolve against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use raso_core::backend::{env_var_name, BackendSpec, RetryPolicy, SecretRef};
use raso_core::model::DatasetPaths;
use raso_core::PipelineConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: Option<String>,
    /// Root directory holding one subdirectory per run.
    pub out: Option<PathBuf>,
    /// Response caches, one `<backend>.jsonl` per backend. Defaults to `<out>/.cache`.
    pub cache_dir: Option<PathBuf>,
    pub template_dir: Option<PathBuf>,
    /// Reserved: the pipeline is deterministic given the cache.
    pub seed: Option<u64>,
    pub dataset: Option<DatasetPaths>,
    pub backends: Vec<BackendDecl>,
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendDecl {
    Replay {
        name: String,
        model_id: String,
        fixture: PathBuf,
    },
    /// Endpoint and key fall back to `RASO_BACKEND_<NAME>_URL` / `_KEY`.
    Http {
        name: String,
        model_id: String,
        #[serde(default)]
        endpoint: Option<String>,
        #[serde(default)]
        key_env: Option<String>,
        #[serde(default)]
        retry: Option<RetryPolicy>,
    },
}

impl BackendDecl {
    pub fn name(&self) -> &str {
        match self {
            BackendDecl::Replay { name, .. } | BackendDecl::Http { name, .. } => name,
        }
    }

    pub fn to_spec(&self) -> Result<BackendSpec> {
        Ok(match self {
            BackendDecl::Replay {
                model_id, fixture, ..
            } => BackendSpec::Replay {
                fixture: fixture.clone(),
                model_id: model_id.clone(),
            },
            BackendDecl::Http {
                name,
                model_id,
                endpoint,
                key_env,
                retry,
            } => {
                let endpoint = match endpoint {
                    Some(e) => e.clone(),
                    None => {
                        let var = env_var_name(name, "URL");
                        std::env::var(&var)
                            .with_context(|| format!("backend `{name}`: set `endpoint` or {var}"))?
                    }
                };
                let auth = match key_env {
                    Some(var) => SecretRef::Env(var.clone()),
                    None => {
                        let var = env_var_name(name, "KEY");
                        if std::env::var_os(&var).is_some() {
                            SecretRef::Env(var)
                        } else {
                            SecretRef::None
                        }
                    }
                };
                BackendSpec::Http {
                    endpoint,
                    model_id: model_id.clone(),
                    auth,
                    retry: retry.unwrap_or_default(),
                }
            }
        })
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.rebase(base);
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.out, &mut self.cache_dir, &mut self.template_dir]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        if let Some(ds) = &mut self.dataset {
            for s in &mut ds.splits {
                fix(&mut s.questions);
                fix(&mut s.annotations);
            }
            fix(&mut ds.contexts);
            fix(&mut ds.embeddings);
        }
        for b in &mut self.backends {
            if let BackendDecl::Replay { fixture, .. } = b {
                fix(fixture);
            }
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("runs"))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.out_dir().join(".cache"))
    }

    pub fn backend(&self, name: Option<&str>) -> Result<&BackendDecl> {
        match name {
            Some(n) => self
                .backends
                .iter()
                .find(|b| b.name() == n)
                .with_context(|| format!("backend `{n}` is not declared in the config")),
            None => self
                .backends
                .first()
                .context("no backends declared in the config"),
        }
    }
}
