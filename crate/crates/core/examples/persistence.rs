//! Persistence or extinction of the total population for a few rate sets.

use dimorph::rates::ConstantRates;
use dimorph::totals::{classify, integrate_totals, stationary_point, StationaryResult, TotalsState};

fn main() -> anyhow::Result<()> {
    let lopsided = ConstantRates {
        p_f: 3.0,
        p_m: 0.5,
        d_f: 1.0,
        d_m: 0.6,
        u_ff: 0.2,
        u_fm: 0.4,
        u_mf: 0.1,
        u_mm: 0.3,
    };
    let cases = [
        ("symmetric, p = 2D", ConstantRates::symmetric(2.0, 1.0, 0.25)),
        ("at the threshold", ConstantRates::symmetric(1.0, 1.0, 0.25)),
        ("below the threshold", ConstantRates::symmetric(0.9, 1.0, 0.25)),
        ("lopsided", lopsided),
    ];
    for (name, r) in cases {
        let ratio = r.p_m / r.d_m + r.p_f / r.d_f;
        let end = integrate_totals(TotalsState::new(1.0, 1.0), &r, 100.0, 0.01)?.last().unwrap().1;
        print!("{name:<22} p_m/D_m + p_f/D_f = {ratio:.3}  {:?}", classify(&r));
        match stationary_point(&r)? {
            StationaryResult::Persistent { m_bar, f_bar, .. } => {
                println!("  (M, F)* = ({m_bar:.6}, {f_bar:.6})  A = {:.4}", m_bar / f_bar)
            }
            StationaryResult::ExtinctOnly => println!("  origin only"),
        }
        println!("{:<22} (M, F)(100) = ({:.3e}, {:.3e})", "", end.m, end.f);
    }
    Ok(())
}
