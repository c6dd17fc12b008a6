use std::io::Write;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Why a command did not succeed. Usage problems exit 2, the rest exit 1.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numeric(String),
    Assertion(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Numeric(_) | Failure::Assertion(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Numeric(m) => write!(f, "error: {m}"),
            Failure::Assertion(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<stein_prelimit::Error> for Failure {
    fn from(e: stein_prelimit::Error) -> Self {
        Failure::Numeric(e.to_string())
    }
}

pub type Outcome<T> = Result<T, Failure>;

pub fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

pub fn require<T>(v: Option<T>, name: &str) -> Outcome<T> {
    v.ok_or_else(|| usage(format!("--{name} is required")))
}

/// Overlays the flags that were given on top of the config file.
pub fn resolve<A: Serialize + DeserializeOwned>(flags: A, file: Option<&Value>) -> Outcome<A> {
    let mut merged = match file {
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(usage("config file must hold a JSON object")),
        None => Map::new(),
    };
    let given = serde_json::to_value(&flags).map_err(|e| usage(e.to_string()))?;
    if let Value::Object(m) = given {
        merged.extend(m.into_iter().filter(|(_, v)| !v.is_null()));
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("config: {e}")))
}

pub fn read_config(path: &PathBuf) -> Outcome<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Writes every float with 17 significant digits.
struct Sig17;

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> std::io::Result<()> {
        write!(w, "{v:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> std::io::Result<()> {
        self.write_f64(w, v as f64)
    }
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    v.serialize(&mut ser).expect("in-memory serialization");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

/// A named pass/fail comparison embedded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= limit`.
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            pass: value <= limit,
        }
    }

    /// Passes when `value >= limit`.
    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            pass: value >= limit,
        }
    }
}

#[derive(Serialize)]
pub struct Report<'a, C: Serialize, R: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub config: &'a C,
    pub result: R,
    pub checks: Vec<Check>,
    pub pass: bool,
}

pub fn report<'a, C: Serialize, R: Serialize>(
    command: &'a str,
    config: &'a C,
    result: R,
    checks: Vec<Check>,
) -> Report<'a, C, R> {
    let pass = checks.iter().all(|c| c.pass);
    Report {
        command,
        version: stein_prelimit::VERSION,
        config,
        result,
        checks,
        pass,
    }
}

/// First failing check, if any.
pub fn verdict(checks: &[Check]) -> Outcome<()> {
    match checks.iter().find(|c| !c.pass) {
        Some(c) => Err(Failure::Assertion(format!(
            "{}: {:e} against limit {:e}",
            c.name, c.value, c.limit
        ))),
        None => Ok(()),
    }
}

pub fn emit(path: Option<&PathBuf>, body: &str) -> Outcome<()> {
    let res = match path {
        Some(p) => std::fs::write(p, body),
        None => std::io::stdout().write_all(body.as_bytes()),
    };
    res.map_err(|e| Failure::Numeric(format!("writing output: {e}")))
}
