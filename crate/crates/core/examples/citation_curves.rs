//! Log-normal cumulative citation curves and the trend/importance fusion gate.

use citecast::generator::{cumulative_citations, fuse, predict_series, CurveParams, GeneratorConfig};

fn main() -> citecast::Result<()> {
    let cfg = GeneratorConfig {
        horizon: 10,
        ..GeneratorConfig::default()
    };
    let curves = [
        ("early peak", CurveParams { mu: 0.3, sigma: 0.6, eta: 2.0 }),
        ("slow burner", CurveParams { mu: 2.2, sigma: 1.0, eta: 3.0 }),
        ("barely cited", CurveParams { mu: 1.0, sigma: 0.9, eta: 0.2 }),
        ("never cited", CurveParams { mu: 1.0, sigma: 0.9, eta: 0.0 }),
    ];
    for (name, p) in &curves {
        let s = predict_series(p, &cfg);
        let ceiling = cfg.alpha_scale * (p.eta.exp() - 1.0);
        let row: Vec<String> = s.iter().map(|c| format!("{c:6.2}")).collect();
        println!("{name:13} {}  (ceiling {ceiling:.2})", row.join(" "));
    }
    let p = curves[1].1;
    println!("slow burner after 50 years: {:.3}", cumulative_citations(&p, cfg.alpha_scale, 50)?);

    let (h, a_g) = fuse(&[1.0, 0.0], &[0.0, 1.0], &[0.5, -0.5])?;
    println!("trend weight {a_g:.3}, fused {h:?}");
    Ok(())
}
