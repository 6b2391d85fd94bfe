use nalgebra::Matrix2;
use price_core::grid::PatchSet;
use price_core::labelcrypt::{
    covariance, decrypt_aligned, eigen_basis, encrypt_subset, normalize, output_utility, column_entropy, CoordMatrix,
    SubDataset,
};
use proptest::prelude::*;

fn point_set(max: u64) -> impl Strategy<Value = Vec<(u64, u64)>> {
    prop::collection::btree_set((0..max, 0..max), 2..60).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn full_rank_roundtrip_is_exact(cells in point_set(40), seed in any::<u64>()) {
        let coords: Vec<(u64, u64)> = cells.iter().map(|&(x, y)| (x * 224, y * 224)).collect();
        let ps = PatchSet::from_coords(224, &coords, true).unwrap();
        let ids: Vec<usize> = (0..ps.len()).collect();
        let sub = SubDataset::from_patches(&ps, &ids);
        let (enc, key) = encrypt_subset(&sub, 2, seed).unwrap();
        let back = decrypt_aligned(&enc, &key.basis, &key.stats, &ids).unwrap();
        prop_assert_eq!(&back, &sub.coords);
        let u = output_utility(&sub.coords, &back).unwrap();
        prop_assert_eq!(u, [column_entropy(&sub.coords, 0), column_entropy(&sub.coords, 1)]);
    }

    #[test]
    fn eigenpairs_match_nalgebra(rows in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..40)) {
        let a = CoordMatrix::new(rows.iter().map(|&(x, y)| [x, y]).collect());
        let (centered, _) = normalize(&a).unwrap();
        let basis = eigen_basis(&centered, 2).unwrap();
        let c = covariance(&centered);
        let eig = Matrix2::new(c[0][0], c[0][1], c[1][0], c[1][1]).symmetric_eigen();
        let mut want = [eig.eigenvalues[0], eig.eigenvalues[1]];
        want.sort_by(|a, b| b.total_cmp(a));
        for (j, w) in want.iter().enumerate() {
            prop_assert!((basis.eigenvalues[j] - w).abs() < 1e-9);
            let v = basis.vectors[j];
            // unit length and C v = λ v
            prop_assert!(((v[0] * v[0] + v[1] * v[1]) - 1.0).abs() < 1e-12);
            let cv = [c[0][0] * v[0] + c[0][1] * v[1], c[1][0] * v[0] + c[1][1] * v[1]];
            prop_assert!((cv[0] - basis.eigenvalues[j] * v[0]).abs() < 1e-9);
            prop_assert!((cv[1] - basis.eigenvalues[j] * v[1]).abs() < 1e-9);
        }
        prop_assert!(basis.eigenvalues[0] >= basis.eigenvalues[1]);
    }

    #[test]
    fn one_component_residual_is_the_dropped_variance(rows in prop::collection::vec((-50f64..50.0, -50f64..50.0), 3..40)) {
        let a = CoordMatrix::new(rows.iter().map(|&(x, y)| [x, y]).collect());
        let (centered, _) = normalize(&a).unwrap();
        let basis = eigen_basis(&centered, 1).unwrap();
        let residual: f64 = centered
            .as_rows()
            .iter()
            .map(|&r| {
                let back = basis.reconstruct(basis.project(r));
                (r[0] - back[0]).powi(2) + (r[1] - back[1]).powi(2)
            })
            .sum();
        let expected = basis.eigenvalues[1] * (centered.rows() - 1) as f64;
        prop_assert!((residual - expected).abs() < 1e-8 * (1.0 + expected.abs()));
    }

    #[test]
    fn encryption_is_seed_deterministic(cells in point_set(20), seed in any::<u64>()) {
        let coords: Vec<(u64, u64)> = cells.iter().map(|&(x, y)| (x * 8, y * 8)).collect();
        let ps = PatchSet::from_coords(8, &coords, true).unwrap();
        let ids: Vec<usize> = (0..ps.len()).collect();
        let sub = SubDataset::from_patches(&ps, &ids);
        let a = encrypt_subset(&sub, 2, seed).unwrap();
        let b = encrypt_subset(&sub, 2, seed).unwrap();
        prop_assert_eq!(a.0.labels_text(), b.0.labels_text());
        prop_assert_eq!(a.1.to_text(), b.1.to_text());
    }
}
