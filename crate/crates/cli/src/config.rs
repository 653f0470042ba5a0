use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use hierwalk::hierlattice::Site;
use hierwalk::rgflow::Order;
use hierwalk::scalar::C64;
use hierwalk::{Error, Result};

pub const DEFAULTS: &[(&str, &str)] = &[
    ("L", "2"),
    ("N", "3"),
    ("J", "100"),
    ("T", "10"),
    ("beta", "0.5"),
    ("lambda", "0"),
    ("x", ""),
    ("seed", "1"),
    ("samples", "100000"),
    ("order", "appendixC"),
    ("tol", "1e-14"),
    ("format", "csv"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Raw `key=value` settings, layered defaults < config file < flags.
#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn with_defaults() -> Self {
        let mut cfg = RunConfig::default();
        for (k, v) in DEFAULTS {
            cfg.values.insert((*k).into(), (*v).into());
        }
        cfg
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
        self.merge_text(&text)
    }

    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Input(format!("config line {}: expected key=value", n + 1)))?;
            let k = k.trim();
            if !DEFAULTS.iter().any(|(d, _)| *d == k) && k != "out" {
                return Err(Error::Input(format!("config line {}: unknown key {k:?}", n + 1)));
            }
            self.set(k, v.trim());
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.values.insert(key.into(), value.into());
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &String)> {
        self.values.iter()
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key);
        raw.trim()
            .parse()
            .map_err(|_| Error::Input(format!("cannot parse {key}={raw:?}")))
    }

    pub fn l(&self) -> Result<u32> {
        let l: u32 = self.parse("L")?;
        if l < 2 {
            return Err(Error::Input("L must be at least 2".into()));
        }
        Ok(l)
    }

    pub fn n(&self) -> Result<u32> {
        self.parse("N")
    }

    pub fn j(&self) -> Result<usize> {
        self.parse("J")
    }

    pub fn t(&self) -> Result<f64> {
        self.parse("T")
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("seed")
    }

    pub fn samples(&self) -> Result<usize> {
        self.parse("samples")
    }

    pub fn tol(&self) -> Result<f64> {
        self.parse("tol")
    }

    pub fn beta(&self) -> Result<C64> {
        parse_complex(self.raw("beta"))
    }

    pub fn lambda(&self) -> Result<C64> {
        parse_complex(self.raw("lambda"))
    }

    pub fn real_lambda(&self) -> Result<f64> {
        let lam = self.lambda()?;
        if lam.im != 0.0 {
            return Err(Error::Domain("the walk needs a real coupling lambda".into()));
        }
        Ok(lam.re)
    }

    pub fn x(&self) -> Result<Site> {
        Site::parse(self.raw("x"), self.l()?)
    }

    pub fn order(&self) -> Result<Order> {
        self.raw("order").parse()
    }

    pub fn format(&self) -> Result<Format> {
        match self.raw("format") {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Input(format!("unknown format {other:?}"))),
        }
    }

    pub fn out(&self) -> Option<&str> {
        self.values.get("out").map(String::as_str).filter(|s| !s.is_empty())
    }
}

/// Parses `"re"` or `"re,im"`.
pub fn parse_complex(text: &str) -> Result<C64> {
    let bad = || Error::Input(format!("cannot parse complex number {text:?}; expected re or re,im"));
    let mut parts = text.split(',').map(str::trim);
    let re: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let im: f64 = match parts.next() {
        Some(p) => p.parse().map_err(|_| bad())?,
        None => 0.0,
    };
    if parts.next().is_some() || !re.is_finite() || !im.is_finite() {
        return Err(bad());
    }
    Ok(C64::new(re, im))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_forms() {
        assert_eq!(parse_complex("0.5").unwrap(), C64::new(0.5, 0.0));
        assert_eq!(parse_complex("-1, 2e-3").unwrap(), C64::new(-1.0, 2e-3));
        assert!(parse_complex("1,2,3").is_err());
        assert!(parse_complex("abc").is_err());
    }

    #[test]
    fn file_values_are_layered() {
        let mut cfg = RunConfig::with_defaults();
        cfg.merge_text("# comment\nN = 4\nbeta=0.1,0.2\n").unwrap();
        assert_eq!(cfg.n().unwrap(), 4);
        assert_eq!(cfg.beta().unwrap(), C64::new(0.1, 0.2));
        cfg.set("N", "2");
        assert_eq!(cfg.n().unwrap(), 2);
        assert!(cfg.merge_text("bogus=1").is_err());
        assert!(cfg.merge_text("N").is_err());
    }
}
