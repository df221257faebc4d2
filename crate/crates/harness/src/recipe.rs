//! Named analytic field recipes such as `bump(center=0, width=0.45, amplitude=1)`.

use std::collections::BTreeMap;
use std::fmt;

use fracwave::lattice::{Grid, ScalarField};

use crate::scenario::{format_real, parse_real};

/// Recipe name with its parameter list: required names first, then optional
/// ones with their defaults.
struct RecipeShape {
    name: &'static str,
    required: &'static [&'static str],
    optional: &'static [(&'static str, f64)],
}

const SHAPES: &[RecipeShape] = &[
    RecipeShape {
        name: "zero",
        required: &[],
        optional: &[],
    },
    RecipeShape {
        name: "constant",
        required: &["value"],
        optional: &[],
    },
    // amplitude * (1 - rho^2)^3 for rho = |x - c| / width < 1
    RecipeShape {
        name: "bump",
        required: &["center", "width", "amplitude"],
        optional: &[("center_y", 0.0)],
    },
    RecipeShape {
        name: "gaussian",
        required: &["center", "width", "amplitude"],
        optional: &[("center_y", 0.0)],
    },
    // amplitude * cos(2 pi k x / L + phase), L the box length
    RecipeShape {
        name: "mode",
        required: &["k", "amplitude"],
        optional: &[("phase", 0.0)],
    },
];

#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    name: String,
    /// Every parameter of the shape, defaults filled in.
    args: BTreeMap<String, f64>,
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(|(k, v)| format!("{k}={}", format_real(*v))).collect();
        write!(f, "{}({})", self.name, args.join(", "))
    }
}

impl Recipe {
    pub fn parse(text: &str) -> Result<Self, String> {
        let text = text.trim();
        let (name, rest) = match text.find('(') {
            Some(open) => {
                if !text.ends_with(')') {
                    return Err(format!("recipe '{text}' lacks a closing parenthesis"));
                }
                (text[..open].trim(), &text[open + 1..text.len() - 1])
            }
            None => (text, ""),
        };
        let shape = SHAPES.iter().find(|s| s.name == name).ok_or_else(|| {
            let known: Vec<&str> = SHAPES.iter().map(|s| s.name).collect();
            format!("unknown recipe '{name}' (known: {})", known.join(", "))
        })?;
        let mut args = BTreeMap::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("recipe argument '{part}' is not key=value"))?;
            let k = k.trim();
            if !shape.required.contains(&k) && !shape.optional.iter().any(|(o, _)| *o == k) {
                return Err(format!("recipe '{name}' has no parameter '{k}'"));
            }
            if args.insert(k.to_string(), parse_real(v)?).is_some() {
                return Err(format!("recipe parameter '{k}' given twice"));
            }
        }
        for req in shape.required {
            if !args.contains_key(*req) {
                return Err(format!("recipe '{name}' needs parameter '{req}'"));
            }
        }
        for (k, v) in shape.optional {
            args.entry(k.to_string()).or_insert(*v);
        }
        if matches!(name, "bump" | "gaussian") && !(args["width"] > 0.0) {
            return Err(format!("recipe '{name}' needs width > 0"));
        }
        Ok(Self {
            name: name.to_string(),
            args,
        })
    }

    pub fn zero() -> Self {
        Self {
            name: "zero".into(),
            args: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_zero(&self) -> bool {
        self.name == "zero" || (self.name == "constant" && self.args["value"] == 0.0)
    }

    pub fn value_at(&self, grid: &Grid, x: [f64; 2]) -> f64 {
        let a = |k: &str| self.args[k];
        let radius = || {
            let dx = x[0] - a("center");
            let dy = if grid.dim() == 2 { x[1] - a("center_y") } else { 0.0 };
            (dx * dx + dy * dy).sqrt() / a("width")
        };
        match self.name.as_str() {
            "constant" => a("value"),
            "bump" => {
                let rho = radius();
                if rho < 1.0 {
                    a("amplitude") * (1.0 - rho * rho).powi(3)
                } else {
                    0.0
                }
            }
            "gaussian" => a("amplitude") * (-radius().powi(2)).exp(),
            "mode" => {
                let w = 2.0 * std::f64::consts::PI * a("k") / grid.box_length();
                a("amplitude") * (w * x[0] + a("phase")).cos()
            }
            _ => 0.0,
        }
    }

    pub fn field(&self, grid: &Grid) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.value_at(grid, x))
    }
}
