//! Shipped models and their default domains.

use hormander_core::system::DomainSpec;

pub const MODELS: [(&str, &str); 6] = [
    ("euclid2", include_str!("../models/euclid2.vf")),
    ("euclid3", include_str!("../models/euclid3.vf")),
    ("heisenberg", include_str!("../models/heisenberg.vf")),
    ("grushin", include_str!("../models/grushin.vf")),
    ("martinet", include_str!("../models/martinet.vf")),
    ("example21", include_str!("../models/example21.vf")),
];

pub fn builtin(name: &str) -> Option<&'static str> {
    MODELS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    MODELS.iter().map(|(n, _)| *n)
}

/// The unit disk for `example21`, `[-1, 1]^n` otherwise.
pub fn default_domain(name: &str, dim: usize) -> DomainSpec {
    if name == "example21" {
        DomainSpec::ball(dim, 1.0)
    } else {
        DomainSpec::cube(dim, 1.0)
    }
}
