use mangrove_core::CellYearRecord;
use mangrove_core::panel::{align_cells, build_supervised, final_year_frame, interpolate_years};
use proptest::prelude::*;

const OBSERVED: [i32; 7] = [1996, 2007, 2008, 2009, 2010, 2015, 2016];

fn rec(cell_id: u64, year: i32, area: f64, perimeter: f64) -> CellYearRecord {
    let left = cell_id as f64;
    CellYearRecord { cell_id, year, left, right: left + 1.0, bottom: 0.0, top: 1.0, area, perimeter }
}

fn yearly(series: &[(u64, Vec<f64>)]) -> Vec<(i32, Vec<CellYearRecord>)> {
    OBSERVED
        .iter()
        .enumerate()
        .map(|(k, &y)| (y, series.iter().filter(|(_, a)| a[k] > 0.0).map(|(id, a)| rec(*id, y, a[k], 4.0 * a[k].sqrt())).collect()))
        .collect()
}

#[test]
fn declining_series_interpolates_piecewise_linearly() {
    let a0 = 12.5;
    let observed: Vec<f64> = OBSERVED.iter().map(|&y| a0 * 0.985f64.powi(y - 1996)).collect();
    let panel = interpolate_years(&align_cells(&yearly(&[(3, observed.clone())])).unwrap()).unwrap();
    assert_eq!(panel.years, (1996..=2016).collect::<Vec<_>>());
    for y in 1996..=2016 {
        let k = OBSERVED.iter().rposition(|&o| o <= y).unwrap().min(OBSERVED.len() - 2);
        let (y0, y1) = (OBSERVED[k], OBSERVED[k + 1]);
        let expected = observed[k] + (observed[k + 1] - observed[k]) * f64::from(y - y0) / f64::from(y1 - y0);
        let got = panel.get(3, y).unwrap().area;
        assert!((got - expected).abs() <= 1e-12 * expected, "{y}: {got} vs {expected}");
    }
}

#[test]
fn zero_filled_cell_stays_zero() {
    let mut years = yearly(&[(1, vec![1.0; 7])]);
    years[0].1.push(rec(9, 1996, 0.0, 0.0));
    let panel = interpolate_years(&align_cells(&years).unwrap()).unwrap();
    assert!(panel.rows.iter().filter(|r| r.cell_id == 9).all(|r| r.area == 0.0 && r.perimeter == 0.0));
    assert_eq!(panel.rows.iter().filter(|r| r.cell_id == 9).count(), 21);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn interpolation_is_exact_at_observations_and_linear_between(
        series in prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..100.0], 7), 1..12)
    ) {
        let input: Vec<(u64, Vec<f64>)> = series.into_iter().enumerate().map(|(i, a)| (i as u64 * 3, a)).collect();
        let aligned = align_cells(&yearly(&input)).unwrap();
        let panel = interpolate_years(&aligned).unwrap();
        prop_assert_eq!(panel.rows.len(), aligned.cell_ids().len() * 21);
        for s in panel.series() {
            for r in s.iter().filter(|r| OBSERVED.contains(&r.year)) {
                prop_assert_eq!(r.area, aligned.get(r.cell_id, r.year).unwrap().area);
            }
            for w in OBSERVED.windows(2) {
                let gap: Vec<f64> = s.iter().filter(|r| r.year >= w[0] && r.year <= w[1]).map(|r| r.area).collect();
                for t in gap.windows(3) {
                    prop_assert!((t[2] - 2.0 * t[1] + t[0]).abs() <= 1e-12 * t.iter().fold(1.0, |m: f64, v| m.max(v.abs())));
                }
            }
        }
        // the target is the next year's area, recoverable exactly
        let sup = build_supervised(&panel);
        prop_assert_eq!(sup.rows.len(), aligned.cell_ids().len() * 20);
        for r in &sup.rows {
            prop_assert_eq!(r.area_next, Some(panel.get(r.cell_id, r.year + 1).unwrap().area));
            prop_assert_eq!(r.area, panel.get(r.cell_id, r.year).unwrap().area);
        }
        let last = final_year_frame(&panel);
        prop_assert!(last.rows.iter().all(|r| r.year == 2016 && r.area_next.is_none()));
        prop_assert_eq!(last.rows.len(), aligned.cell_ids().len());
    }
}
