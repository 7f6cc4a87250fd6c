use serde::Serialize;
use serde_json::Value;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub instance: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: &str, instance: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            instance: instance.into(),
            residual,
            tolerance,
            pass: residual <= tolerance,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Skipped {
    pub name: String,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema: u32,
    pub command: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<Skipped>,
    pub data: Value,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            schema: 1,
            command: command.into(),
            pass: true,
            checks: Vec::new(),
            skipped: Vec::new(),
            data: Value::Null,
        }
    }

    pub fn push(&mut self, check: Check) {
        self.pass &= check.pass;
        self.checks.push(check);
    }

    pub fn skip(&mut self, name: &str, reason: impl Into<String>) {
        self.skipped.push(Skipped {
            name: name.into(),
            reason: reason.into(),
        });
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{} {} [{}] residual {:.3e} tol {:.1e}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.instance,
                c.residual,
                c.tolerance
            ));
        }
        for s in &self.skipped {
            out.push_str(&format!("SKIP {}: {}\n", s.name, s.reason));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
