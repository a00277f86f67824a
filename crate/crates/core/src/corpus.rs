//! Built-in nilpotent Lie algebras used as fixtures and by the CLI.

use crate::algebra::StructureTensor;

/// Heisenberg algebra of dimension `2k + 1`: `[e_{2i-1}, e_{2i}] = e_{2k+1}`.
pub fn heisenberg(k: usize) -> StructureTensor {
    let n = 2 * k + 1;
    let triples: Vec<_> = (0..k).map(|i| (2 * i, 2 * i + 1, n - 1, 1.0)).collect();
    StructureTensor::from_triples(n, &triples).expect("valid indices")
}

/// Filiform algebra `[e_1, e_i] = e_{i+1}` for `2 <= i <= n - 1`.
pub fn filiform(n: usize) -> StructureTensor {
    let triples: Vec<_> = (1..n - 1).map(|i| (0, i, i + 1, 1.0)).collect();
    StructureTensor::from_triples(n, &triples).expect("valid indices")
}

/// The 4-dimensional filiform algebra `[e_1, e_2] = e_3, [e_1, e_3] = e_4`.
pub fn n4() -> StructureTensor {
    filiform(4)
}

/// Free 2-step nilpotent algebra on three generators.
pub fn free_two_step_three() -> StructureTensor {
    StructureTensor::from_triples(6, &[(0, 1, 3, 1.0), (0, 2, 4, 1.0), (1, 2, 5, 1.0)]).expect("valid indices")
}

/// Names of all built-in algebras, ordered by dimension then name.
pub fn names() -> Vec<String> {
    let mut out: Vec<(usize, String)> = Vec::new();
    for k in 1..=6 {
        out.push((2 * k + 1, format!("h{}", 2 * k + 1)));
    }
    out.push((4, "n4".into()));
    for n in 3..=9 {
        out.push((n, format!("L{n}")));
    }
    out.push((6, "free23".into()));
    out.sort();
    out.into_iter().map(|(_, s)| s).collect()
}

pub fn by_name(name: &str) -> Option<StructureTensor> {
    if name == "n4" {
        return Some(n4());
    }
    if name == "free23" {
        return Some(free_two_step_three());
    }
    if let Some(rest) = name.strip_prefix('h') {
        let n: usize = rest.parse().ok()?;
        if n >= 3 && n % 2 == 1 && n <= 13 {
            return Some(heisenberg((n - 1) / 2));
        }
    }
    if let Some(rest) = name.strip_prefix('L') {
        let n: usize = rest.parse().ok()?;
        if (3..=9).contains(&n) {
            return Some(filiform(n));
        }
    }
    None
}

/// Every built-in algebra with its name.
pub fn all() -> Vec<(String, StructureTensor)> {
    names().into_iter().map(|n| {
        let t = by_name(&n).expect("listed name");
        (n, t)
    }).collect()
}
