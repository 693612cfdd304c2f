use std::collections::BTreeMap;

use crate::partitions::Partition;

pub(crate) fn assert_maps_close(a: &BTreeMap<Partition, f64>, b: &BTreeMap<Partition, f64>, tol: f64) {
    let scale = a.values().chain(b.values()).fold(1.0f64, |m, v| m.max(v.abs()));
    for key in a.keys().chain(b.keys()) {
        let x = a.get(key).copied().unwrap_or(0.0);
        let y = b.get(key).copied().unwrap_or(0.0);
        assert!((x - y).abs() <= tol * scale, "{key}: {x} vs {y}");
    }
}
