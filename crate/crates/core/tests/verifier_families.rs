use osband_id::catalog::{Catalog, IdentificationFunction};
use osband_id::verifier::{default_family, verify_identification, Exclusion, VerifyConfig, XGrid};

const KEYS: [&str; 10] = [
    "mean",
    "expectile:0.8",
    "quantile:0.05",
    "quantile:0.5",
    "mean-var",
    "mean-var-prime",
    "quantile-es:0.05",
    "quantile-es-prime:0.1",
    "var-covar:0.05,0.1",
    "covar-1d:0.05,0.1",
];

#[test]
fn every_key_passes_on_its_default_family() {
    for exclusion in [Exclusion::Relative(0.05), Exclusion::Distance(0.1)] {
        let config = VerifyConfig { exclusion, ..VerifyConfig::default() };
        for key in KEYS {
            let c = Catalog::parse(key).unwrap();
            let f = c.functional().unwrap();
            let family = default_family(&f).unwrap();
            assert!(family.laws.len() >= 20);
            let r = verify_identification(&c, &f, &family, &XGrid::around_truth(c.action_dim()), &config).unwrap();
            println!(
                "{key:24} forward {:4} reverse {:5} worst zero {:9.2e} min margin {:9.2e} flagged {}",
                r.forward_checked,
                r.reverse_checked,
                r.worst_zero.as_ref().map_or(0.0, |w| w.value),
                r.smallest_margin.as_ref().map_or(f64::NAN, |w| w.value),
                r.flagged
            );
            assert!(r.passed, "{key}: {:#?}", r.failures.iter().filter(|f| f.flag.is_none()).take(3).collect::<Vec<_>>());
            assert_eq!(r.flagged > 0, key.starts_with("covar-1d"), "{key}");
        }
    }
}
