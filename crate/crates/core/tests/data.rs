use funcsel::{design_matrix, subsets_of, Dataset, SubsetCode};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn dataset(n: usize, k: usize) -> Dataset {
    let x = DMatrix::from_fn(n, k, |i, j| ((i * 7 + j * 13) % 11) as f64 + j as f64 * 0.1);
    let y = (0..n).map(|i| i as f64).collect();
    Dataset::new(y, x, (1..=k).map(|j| format!("x{j}")).collect(), "y").unwrap()
}

proptest! {
    #[test]
    fn flags_round_trip(k in 1usize..=24, raw in any::<u32>()) {
        let e = SubsetCode::new(raw & SubsetCode::full(k).bits());
        prop_assert_eq!(SubsetCode::from_flags(&e.to_flags(k)), e);
        let flags = e.to_flags(k);
        let code: u32 = flags.iter().enumerate().map(|(j, &f)| (f as u32) << j).sum();
        prop_assert_eq!(code, e.bits());
    }

    #[test]
    fn design_columns_follow_the_code(k in 1usize..=6, raw in any::<u32>()) {
        let d = dataset(12, k);
        let e = SubsetCode::new(raw & SubsetCode::full(k).bits());
        let m = design_matrix(&d, e);
        prop_assert_eq!(m.ncols(), e.size() + 1);
        prop_assert!(m.column(0).iter().all(|&v| v == 1.0));
        for e2 in e.proper_subsets() {
            let m2 = design_matrix(&d, e2);
            for c in 0..m2.ncols() {
                prop_assert!((0..m.ncols()).any(|c2| m.column(c2) == m2.column(c)));
            }
        }
    }
}

#[test]
fn enumeration_has_two_to_the_k_codes() {
    for k in 1..=10 {
        let all = subsets_of(k).unwrap();
        assert_eq!(all.len(), 1 << k);
        assert_eq!(all[0], SubsetCode::EMPTY);
        assert!(all.last().unwrap().is_full(k));
    }
    assert!(subsets_of(25).is_err());
    assert!(subsets_of(0).is_err());
}

#[test]
fn stackloss_codes_name_covariates() {
    let d = funcsel::stackloss();
    assert_eq!((d.n(), d.k()), (21, 3));
    assert_eq!(d.subset_names(SubsetCode::new(3)), vec!["Air.Flow", "Water.Temp"]);
    assert_eq!(d.subset_names(SubsetCode::new(5)), vec!["Air.Flow", "Acid.Conc"]);
}

#[test]
fn csv_errors_carry_coordinates() {
    let csv = "y,a,b\n1,2,3\n4,oops,6\n";
    let err = Dataset::from_csv_reader(csv.as_bytes(), "y").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("row") && msg.contains('a'), "{msg}");
    assert!(Dataset::from_csv_reader("y,a\n1,2\n3,4\n5,7\n".as_bytes(), "z").is_err());
}
