//! Run settings: a flat `key=value` file merged with command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use rigidity_core::ModelKind;

macro_rules! settings {
    ($($(#[$doc:meta])* $field:ident : $ty:ty, $key:literal;)*) => {
        /// Every tunable of a run. `None` means "use the command default".
        #[derive(Debug, Clone, Default, PartialEq, Args)]
        pub struct Settings {
            $(
                $(#[$doc])*
                #[arg(long = $key, global = true, allow_negative_numbers = true)]
                pub $field: Option<$ty>,
            )*
        }

        impl Settings {
            /// Sets one field from its textual form. Keys accept `-` or `_`.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let key = key.trim().replace('_', "-");
                let value = value.trim();
                match key.as_str() {
                    $($key => self.$field = Some(parse(&key, value)?),)*
                    "r" => self.disk_radius = Some(parse(&key, value)?),
                    _ => bail!("unknown config key `{key}`"),
                }
                Ok(())
            }

            /// Fields set in `other` win.
            pub fn merge(&mut self, other: &Settings) {
                $(if other.$field.is_some() { self.$field = other.$field.clone(); })*
            }

            /// Set fields as ordered `key -> value` text.
            pub fn entries(&self) -> BTreeMap<String, String> {
                let mut out = BTreeMap::new();
                $(if let Some(v) = &self.$field { out.insert($key.to_string(), render(v)); })*
                out
            }
        }
    };
}

settings! {
    /// Model kind: chain, double_dot or billiard2d.
    model: ModelKind, "model";
    /// Lead coupling v.
    v: f64, "v";
    /// Double-dot internal coupling u.
    u: f64, "u";
    /// Chain length.
    n_sites: usize, "n-sites";
    /// Billiard width in sites.
    nx: usize, "nx";
    /// Billiard height in sites.
    ny: usize, "ny";
    /// Billiard lead width in sites.
    lead_width: usize, "lead-width";
    /// Disk radius in sites.
    #[arg(alias = "r")]
    disk_radius: f64, "disk-radius";
    disk_radius_min: f64, "disk-radius-min";
    disk_radius_max: f64, "disk-radius-max";
    /// Number of disk radii.
    disk_radius_n: usize, "disk-radius-n";
    /// Number of energies.
    n_e: usize, "n-e";
    e_min: f64, "e-min";
    e_max: f64, "e-max";
    v_min: f64, "v-min";
    v_max: f64, "v-max";
    /// Number of couplings.
    n_v: usize, "n-v";
    /// Swept parameter of `sweep`: none, v or r.
    param: String, "param";
    /// Comma-separated outputs of `sweep`: t, rho, poles, r_lambda.
    outputs: String, "outputs";
    /// One point in this many is cross-checked against the resonant sum.
    check_stride: usize, "check-stride";
    /// Worker threads (default: all cores).
    threads: usize, "threads";
    /// Output directory.
    out_dir: PathBuf, "out-dir";
}

trait Render {
    fn render(&self) -> String;
}

macro_rules! render_display {
    ($($t:ty),*) => {$(impl Render for $t { fn render(&self) -> String { self.to_string() } })*};
}
render_display!(f64, usize, String);

impl Render for ModelKind {
    fn render(&self) -> String {
        self.as_str().to_string()
    }
}

impl Render for PathBuf {
    fn render(&self) -> String {
        self.display().to_string()
    }
}

fn render<T: Render>(value: &T) -> String {
    value.render()
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("bad value `{value}` for `{key}`: {e}"))
}

impl Settings {
    pub fn parse_text(text: &str) -> Result<Settings> {
        let mut s = Settings::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key=value", n + 1))?;
            s.set(key, value).with_context(|| format!("line {}", n + 1))?;
        }
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse_text(&text).with_context(|| format!("in {}", path.display()))
    }

    /// `key=value` lines in key order, loadable with [`Settings::from_file`].
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}
