//! Settings resolution: command-line flags override environment variables,
//! which override the TOML config file, which overrides built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use twai_core::double_check::{FixtureSearch, HttpSearch, SearchClient};
use twai_core::gateway::{ProviderKind, ProviderRegistry, ProviderSpec, DEFAULT_TIMEOUT};
use twai_core::session::MetricsPanel;
use twai_core::store::Store;
use twai_core::{Error, VerificationSettings, Workbench};

pub const DEFAULT_PORT: u16 = 8787;
pub const DEFAULT_WORKSPACE: &str = "twai-workspace";

pub const ENV_WORKSPACE: &str = "TWAI_WORKSPACE";
pub const ENV_PORT: &str = "TWAI_PORT";
pub const ENV_PROVIDERS: &str = "TWAI_PROVIDERS";
pub const ENV_SEARCH_FIXTURE: &str = "TWAI_SEARCH_FIXTURE";
pub const ENV_CONFIG: &str = "TWAI_CONFIG";

/// Contents of the `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub workspace: Option<PathBuf>,
    pub port: Option<u16>,
    pub providers: Option<PathBuf>,
    pub search_fixture: Option<PathBuf>,
    /// Base URL of a live search endpoint, used when no fixture is given.
    pub search_url: Option<String>,
    pub metrics: Option<PathBuf>,
    pub timeout_ms: Option<u64>,
    pub verification: VerificationSettings,
}

impl FileConfig {
    /// Parse a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let raw = fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let mut cfg: FileConfig =
            toml::from_str(&raw).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.workspace,
            &mut cfg.providers,
            &mut cfg.search_fixture,
            &mut cfg.metrics,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Flags {
    pub workspace: Option<PathBuf>,
    pub port: Option<u16>,
    pub providers: Option<PathBuf>,
    pub search_fixture: Option<PathBuf>,
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub workspace: PathBuf,
    pub port: u16,
    pub providers: Option<PathBuf>,
    pub search_fixture: Option<PathBuf>,
    pub search_url: Option<String>,
    pub metrics: Option<PathBuf>,
    pub timeout: Duration,
    pub verification: VerificationSettings,
}

/// Merge flags, environment (through `env`) and the config file.
pub fn resolve(flags: &Flags, env: impl Fn(&str) -> Option<String>) -> Result<Settings, Error> {
    let config_path = flags.config.clone().or_else(|| env(ENV_CONFIG).map(PathBuf::from));
    let file = match config_path {
        Some(p) => FileConfig::load(&p)?,
        None => FileConfig::default(),
    };
    let env_path = |key: &str| env(key).filter(|v| !v.is_empty()).map(PathBuf::from);
    let env_port = match env(ENV_PORT).filter(|v| !v.is_empty()) {
        Some(v) => Some(
            v.parse::<u16>()
                .map_err(|_| Error::InvalidConfig(format!("{ENV_PORT}=`{v}` is not a port number")))?,
        ),
        None => None,
    };
    Ok(Settings {
        workspace: flags
            .workspace
            .clone()
            .or_else(|| env_path(ENV_WORKSPACE))
            .or(file.workspace)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_WORKSPACE)),
        port: flags.port.or(env_port).or(file.port).unwrap_or(DEFAULT_PORT),
        providers: flags
            .providers
            .clone()
            .or_else(|| env_path(ENV_PROVIDERS))
            .or(file.providers),
        search_fixture: flags
            .search_fixture
            .clone()
            .or_else(|| env_path(ENV_SEARCH_FIXTURE))
            .or(file.search_fixture),
        search_url: file.search_url,
        metrics: file.metrics,
        timeout: file.timeout_ms.map_or(DEFAULT_TIMEOUT, Duration::from_millis),
        verification: file.verification,
    })
}

/// Read a providers file: a JSON array of provider specs. Relative mock
/// `fixture` paths are resolved against the file's directory.
pub fn load_providers(path: &Path) -> Result<Vec<ProviderSpec>, Error> {
    let raw = fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    let mut specs: Vec<ProviderSpec> =
        serde_json::from_str(&raw).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for spec in &mut specs {
        if spec.kind != ProviderKind::Mock {
            continue;
        }
        if let Some(fixture) = spec.endpoint_config.get_mut("fixture") {
            if Path::new(fixture.as_str()).is_relative() {
                *fixture = base.join(&*fixture).to_string_lossy().into_owned();
            }
        }
    }
    Ok(specs)
}

pub fn build_registry(settings: &Settings) -> Result<ProviderRegistry, Error> {
    let registry = ProviderRegistry::new(settings.timeout);
    if let Some(path) = &settings.providers {
        for spec in load_providers(path)? {
            registry.register_provider(spec)?;
        }
    }
    Ok(registry)
}

pub fn build_search(settings: &Settings) -> Result<Arc<dyn SearchClient>, Error> {
    Ok(match (&settings.search_fixture, &settings.search_url) {
        (Some(path), _) => Arc::new(FixtureSearch::from_path(path)?),
        (None, Some(url)) => Arc::new(HttpSearch::new(url.clone(), settings.timeout)),
        (None, None) => Arc::new(FixtureSearch::default()),
    })
}

/// Open the workspace (taking its writer lock) and everything configured.
pub fn open_workbench(settings: &Settings) -> Result<Workbench, Error> {
    let store = Store::open(&settings.workspace)?;
    let mut wb = Workbench::open(
        store,
        build_registry(settings)?,
        build_search(settings)?,
        settings.verification.clone(),
    )?;
    if let Some(path) = &settings.metrics {
        wb = wb.with_metrics(MetricsPanel::from_path(path)?);
    }
    Ok(wb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env_of(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn defaults_apply_without_sources() {
        let s = resolve(&Flags::default(), env_of(&[])).unwrap();
        assert_eq!(s.port, DEFAULT_PORT);
        assert_eq!(s.workspace, PathBuf::from(DEFAULT_WORKSPACE));
        assert_eq!(s.timeout, DEFAULT_TIMEOUT);
    }

    #[test]
    fn flags_beat_env_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("twai.toml");
        fs::write(
            &cfg,
            "workspace = \"from-file\"\nport = 1111\nproviders = \"p.json\"\ntimeout_ms = 500\n\n[verification.source]\ntau = 0.7\n",
        )
        .unwrap();
        let cfg_str = cfg.to_string_lossy().into_owned();

        let file_only = resolve(&Flags::default(), env_of(&[(ENV_CONFIG, &cfg_str)])).unwrap();
        assert_eq!(file_only.port, 1111);
        assert_eq!(file_only.workspace, dir.path().join("from-file"));
        assert_eq!(file_only.providers, Some(dir.path().join("p.json")));
        assert_eq!(file_only.timeout, Duration::from_millis(500));
        assert_eq!(file_only.verification.source.tau, 0.7);
        assert_eq!(file_only.verification.source.top_k, 5);

        let env_wins = resolve(
            &Flags::default(),
            env_of(&[(ENV_CONFIG, &cfg_str), (ENV_PORT, "2222"), (ENV_WORKSPACE, "from-env")]),
        )
        .unwrap();
        assert_eq!(env_wins.port, 2222);
        assert_eq!(env_wins.workspace, PathBuf::from("from-env"));

        let flags = Flags {
            port: Some(3333),
            workspace: Some("from-flag".into()),
            config: Some(cfg.clone()),
            ..Flags::default()
        };
        let flag_wins = resolve(&flags, env_of(&[(ENV_PORT, "2222"), (ENV_WORKSPACE, "from-env")])).unwrap();
        assert_eq!(flag_wins.port, 3333);
        assert_eq!(flag_wins.workspace, PathBuf::from("from-flag"));
    }

    #[test]
    fn bad_sources_are_invalid_config() {
        assert_eq!(
            resolve(&Flags::default(), env_of(&[(ENV_PORT, "eighty")]))
                .unwrap_err()
                .code(),
            "InvalidConfig"
        );
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.toml");
        fs::write(&cfg, "colour = \"blue\"\n").unwrap();
        let flags = Flags {
            config: Some(cfg),
            ..Flags::default()
        };
        assert_eq!(resolve(&flags, env_of(&[])).unwrap_err().code(), "InvalidConfig");
        let weights = dir.path().join("weights.toml");
        fs::write(
            &weights,
            "[verification.weights]\nsource = 0.5\ndouble_check = 0.5\ncompare = 0.5\n",
        )
        .unwrap();
        let flags = Flags {
            config: Some(weights),
            ..Flags::default()
        };
        assert_eq!(resolve(&flags, env_of(&[])).unwrap_err().code(), "InvalidConfig");
    }

    #[test]
    fn provider_fixture_paths_are_relative_to_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("providers.json");
        fs::write(
            &path,
            r#"[{"id": "m", "display_name": "M", "kind": "mock", "endpoint_config": {"fixture": "mock.json"}}]"#,
        )
        .unwrap();
        let specs = load_providers(&path).unwrap();
        assert_eq!(
            specs[0].endpoint_config["fixture"],
            dir.path().join("mock.json").to_string_lossy()
        );
    }
}
