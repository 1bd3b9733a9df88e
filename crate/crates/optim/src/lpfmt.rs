//! Plain-text dump of an [`IpInstance`] for debugging.
//!
//! ```text
//! minimize
//!   obj: 40 x_0 + 10000 chi_1
//! subject to
//!   veh_0: 1 x_0 <= 1
//!   req_1: 1 x_0 + 1 chi_1 = 1
//! bounds
//!   0 <= x_0 <= 1
//!   0 <= chi_1 <= 1
//! binary
//!   x_0 chi_1
//! end
//! ```
//!
//! Terms are `<coeff> <name>` joined by ` + ` / ` - `; zero objective
//! coefficients are omitted. Infinite bounds print as `-inf` / `+inf`.
//! Integer variables whose bounds are exactly `[0, 1]` are listed under
//! `binary`, other integers under `general`.

use std::fmt::Write;

use crate::model::IpInstance;

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn write_terms(out: &mut String, inst: &IpInstance, terms: impl Iterator<Item = (usize, f64)>) {
    let mut first = true;
    for (j, a) in terms {
        if a == 0.0 {
            continue;
        }
        let name = &inst.vars[j].name;
        if first {
            if a < 0.0 {
                out.push_str("- ");
            }
        } else {
            out.push_str(if a < 0.0 { " - " } else { " + " });
        }
        let _ = write!(out, "{} {}", fmt_num(a.abs()), name);
        first = false;
    }
    if first {
        out.push('0');
    }
}

pub fn write_lp(inst: &IpInstance) -> String {
    let mut out = String::from("minimize\n  obj: ");
    write_terms(&mut out, inst, inst.objective.iter().copied().enumerate());
    out.push_str("\nsubject to\n");
    for c in &inst.constraints {
        let _ = write!(out, "  {}: ", c.name);
        write_terms(&mut out, inst, c.coeffs.iter().copied());
        let _ = writeln!(out, " {} {}", c.relation, fmt_num(c.rhs));
    }
    out.push_str("bounds\n");
    for v in &inst.vars {
        let _ = writeln!(out, "  {} <= {} <= {}", fmt_num(v.lower), v.name, fmt_num(v.upper));
    }
    let binaries: Vec<&str> = inst
        .vars
        .iter()
        .filter(|v| v.integer && v.lower == 0.0 && v.upper == 1.0)
        .map(|v| v.name.as_str())
        .collect();
    let general: Vec<&str> = inst
        .vars
        .iter()
        .filter(|v| v.integer && !(v.lower == 0.0 && v.upper == 1.0))
        .map(|v| v.name.as_str())
        .collect();
    if !binaries.is_empty() {
        let _ = writeln!(out, "binary\n  {}", binaries.join(" "));
    }
    if !general.is_empty() {
        let _ = writeln!(out, "general\n  {}", general.join(" "));
    }
    out.push_str("end\n");
    out
}
