use std::collections::BTreeSet;

use proptest::prelude::*;
use tcontract::notation::{classify_indices, kernel_family, KernelFamily};
use tcontract::{parse_contraction, ContractionSpec};

fn spec_strategy() -> impl Strategy<Value = ContractionSpec> {
    (0usize..=3, 0usize..=3, 0usize..=3, any::<u64>()).prop_filter_map("orders", |(nk, fa, fb, seed)| {
        if nk + fa == 0 || nk + fb == 0 {
            return None;
        }
        let pool: Vec<char> = "kmnpq".chars().chain("rstuvw".chars()).collect();
        let k = &pool[..nk];
        let a_free = &pool[5..5 + fa];
        let b_free = &pool[8..8 + fb];
        let rotate = |mut v: Vec<char>, by: u64| {
            if !v.is_empty() {
                let n = v.len();
                v.rotate_left((by as usize) % n);
            }
            v.into_iter().collect::<String>()
        };
        let a = rotate([k, a_free].concat(), seed);
        let b = rotate([b_free, k].concat(), seed >> 8);
        let c = rotate([b_free, a_free].concat(), seed >> 16);
        ContractionSpec::new(&a, &b, &c, 1.0, 0.0).ok()
    })
}

proptest! {
    #[test]
    fn classification_partitions_labels(spec in spec_strategy()) {
        let cls = classify_indices(&spec);
        let all: BTreeSet<char> = spec.a.iter().chain(&spec.b).copied().collect();
        let mut parts: Vec<char> = cls.contracted.iter().chain(&cls.free_a).chain(&cls.free_b).copied().collect();
        let n = parts.len();
        parts.sort_unstable();
        parts.dedup();
        prop_assert_eq!(parts.len(), n);
        prop_assert_eq!(parts.into_iter().collect::<BTreeSet<_>>(), all);
        let family = kernel_family(&cls);
        let want = match (cls.free_a.is_empty(), cls.free_b.is_empty()) {
            _ if cls.contracted.is_empty() => KernelFamily::Ger,
            (true, true) => KernelFamily::Dot,
            (false, false) => KernelFamily::Gemm,
            _ => KernelFamily::Gemv,
        };
        prop_assert_eq!(family, want);
    }

    #[test]
    fn printed_spec_reparses(spec in spec_strategy()) {
        prop_assert_eq!(parse_contraction(&spec.to_string()).unwrap(), spec);
    }
}
