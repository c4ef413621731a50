use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;

use super::case::ToCase;
use super::filter::DensityFilter;
use super::oc::oc_update_filtered;
use super::ToSettings;
use crate::error::Result;
use crate::fe::element::{quadratic_form, scale};
use crate::fe::{
    assemble_with, constrain_and_solve, element_stiffness, gather, orphan_dofs, BoundaryConditionSet, DensityField,
    ElasticProperties, StructuredGrid,
};

/// Top-edge node nearest `L · width`; exact ties go to the lower column.
pub fn load_node(grid: &StructuredGrid, load_location: f64) -> usize {
    let target = load_location * grid.nx as f64;
    let lower = target.floor();
    let col = if target - lower <= 0.5 { lower } else { lower + 1.0 };
    grid.node((col as usize).min(grid.nx), grid.ny)
}

/// Clamped bottom edge and a unit point load at the top edge.
pub fn to_boundary_conditions(grid: &StructuredGrid, case: &ToCase) -> BoundaryConditionSet {
    let mut bcs = BoundaryConditionSet::clamp_bottom(grid);
    let n = load_node(grid, case.load_location);
    bcs.point_loads.push((2 * n, case.theta.cos()));
    bcs.point_loads.push((2 * n + 1, case.theta.sin()));
    bcs
}

/// Compliance `f·u` of the SIMP-interpolated structure and its gradient
/// with respect to each element density.
pub fn compliance_and_sensitivity(
    rho: &DensityField,
    case: &ToCase,
    grid: &StructuredGrid,
    props: &ElasticProperties,
    settings: &ToSettings,
) -> Result<(f64, Vec<f64>)> {
    let bcs = to_boundary_conditions(grid, case);
    compliance_with_bcs(rho, &bcs, grid, props, settings)
}

pub(crate) fn compliance_with_bcs(
    rho: &DensityField,
    bcs: &BoundaryConditionSet,
    grid: &StructuredGrid,
    props: &ElasticProperties,
    settings: &ToSettings,
) -> Result<(f64, Vec<f64>)> {
    let p = settings.penalty;
    let k0 = element_stiffness(props, grid.h);
    let active = alloc::vec![true; grid.element_count()];
    let k = assemble_with(grid, &active, |e, ke| *ke = scale(&k0, rho.rho[e].powf(p)));
    let f = bcs.load_vector(grid.dof_count());
    let u = constrain_and_solve(&k, &f, bcs, &orphan_dofs(grid, &active))?;
    let compliance = f.iter().zip(&u).map(|(a, b)| a * b).sum();
    let sens = (0..grid.element_count())
        .map(|e| {
            let ue = gather(grid, e, &u);
            -p * rho.rho[e].powf(p - 1.0) * quadratic_form(&k0, &ue)
        })
        .collect();
    Ok((compliance, sens))
}

/// Outcome of a full optimization run.
#[derive(Debug, Clone)]
pub struct ToResult {
    /// Filtered (physical) densities of the final design.
    pub density: DensityField,
    /// Compliance before each OC update, followed by that of the final design.
    pub compliance_history: Vec<f64>,
}

/// Runs `settings.iterations` rounds of filter → FE solve → sensitivity → OC
/// update starting from a uniform field at the target volume fraction.
pub fn run_topology_optimization(
    case: &ToCase,
    grid: &StructuredGrid,
    props: &ElasticProperties,
    settings: &ToSettings,
) -> Result<ToResult> {
    case.validate()?;
    settings.validate()?;
    let filter = DensityFilter::new(grid.nx, grid.ny, settings.filter_radius)?;
    let bcs = to_boundary_conditions(grid, case);
    let mut x = DensityField::uniform(grid.nx, grid.ny, case.vf.max(settings.rho_min))?;
    let mut history = Vec::with_capacity(settings.iterations + 1);
    for _ in 0..settings.iterations {
        let phys = filter.apply(&x);
        let (c, dc) = compliance_with_bcs(&phys, &bcs, grid, props, settings)?;
        history.push(c);
        let dc = filter.apply_transpose(&dc);
        x = oc_update_filtered(&x, &dc, case.vf, settings, &filter)?;
    }
    let mut density = filter.apply(&x);
    // weighted averages of ones can land an ulp above 1
    for v in density.rho.iter_mut() {
        *v = v.min(1.0);
    }
    let (c, _) = compliance_with_bcs(&density, &bcs, grid, props, settings)?;
    history.push(c);
    Ok(ToResult { density, compliance_history: history })
}

/// Thresholds densities: an entry becomes 1 iff it is `>= threshold`.
pub fn binarize(rho: &DensityField, threshold: f64) -> DensityField {
    debug_assert!(threshold > 0.0 && threshold < 1.0);
    DensityField {
        nx: rho.nx,
        ny: rho.ny,
        rho: rho.rho.iter().map(|&r| if r >= threshold { 1.0 } else { 0.0 }).collect(),
        binarized: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn unit_props() -> ElasticProperties {
        ElasticProperties { e: 1.0, nu: 0.3 }
    }

    #[test]
    fn solid_field_sensitivities_are_non_positive() {
        let g = StructuredGrid::new(8, 8, 1.0).unwrap();
        let case = ToCase::new(0.4, 0.3, 1.0, 0).unwrap();
        let rho = DensityField::uniform(8, 8, 1.0).unwrap();
        let (c, dc) = compliance_and_sensitivity(&rho, &case, &g, &unit_props(), &ToSettings::default()).unwrap();
        assert!(c > 0.0);
        assert!(dc.iter().all(|&v| v <= 0.0));
    }

    #[test]
    fn sensitivity_matches_central_differences() {
        let g = StructuredGrid::new(6, 6, 1.0).unwrap();
        let s = ToSettings::default();
        let case = ToCase::new(0.4, 0.7, 4.0, 0).unwrap();
        let mut rho = DensityField::uniform(6, 6, 0.5).unwrap();
        for (i, v) in rho.rho.iter_mut().enumerate() {
            *v = 0.3 + 0.6 * (((i * 17 + 5) % 13) as f64 / 12.0);
        }
        let (_, dc) = compliance_and_sensitivity(&rho, &case, &g, &unit_props(), &s).unwrap();
        let step = 1e-6;
        for &e in &[0usize, 7, 14, 23, 35] {
            let mut plus = rho.clone();
            plus.rho[e] += step;
            let mut minus = rho.clone();
            minus.rho[e] -= step;
            let (cp, _) = compliance_and_sensitivity(&plus, &case, &g, &unit_props(), &s).unwrap();
            let (cm, _) = compliance_and_sensitivity(&minus, &case, &g, &unit_props(), &s).unwrap();
            let fd = (cp - cm) / (2.0 * step);
            assert!((fd - dc[e]).abs() <= 1e-5 * dc[e].abs(), "element {e}: fd {fd} vs {}", dc[e]);
        }
    }

    #[test]
    fn doubling_load_quadruples_compliance() {
        let g = StructuredGrid::new(6, 5, 1.0).unwrap();
        let s = ToSettings::default();
        let case = ToCase::new(0.4, 0.5, 1.2, 0).unwrap();
        let rho = DensityField::uniform(6, 5, 0.6).unwrap();
        let mut bcs = to_boundary_conditions(&g, &case);
        let (c1, _) = compliance_with_bcs(&rho, &bcs, &g, &unit_props(), &s).unwrap();
        for l in bcs.point_loads.iter_mut() {
            l.1 *= 2.0;
        }
        let (c2, _) = compliance_with_bcs(&rho, &bcs, &g, &unit_props(), &s).unwrap();
        assert!((c2 - 4.0 * c1).abs() <= 1e-12 * c2);
    }

    #[test]
    fn load_node_rounding() {
        let g = StructuredGrid::new(32, 32, 1.0).unwrap();
        assert_eq!(load_node(&g, 0.5), g.node(16, 32));
        assert_eq!(load_node(&g, 0.3), g.node(10, 32));
        assert_eq!(load_node(&g, 0.7), g.node(22, 32));
        assert_eq!(load_node(&g, 1.0), g.node(32, 32));
        // 1/64 · 32 = 0.5 exactly: tie goes to the lower column
        assert_eq!(load_node(&g, 1.0 / 64.0), g.node(0, 32));
    }

    #[test]
    fn midspan_downward_load_reduces_compliance() {
        let g = StructuredGrid::new(32, 32, 1.0).unwrap();
        let case = ToCase::new(0.4, 0.5, 3.0 * PI / 2.0, 0).unwrap();
        let s = ToSettings::default();
        let r = run_topology_optimization(&case, &g, &unit_props(), &s).unwrap();
        let h = &r.compliance_history;
        assert_eq!(h.len(), 31);
        assert!(h[30] < 0.5 * h[0]);
        assert!((r.density.volume_fraction() - 0.4).abs() <= 1e-3);
        let decreasing = h.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(decreasing >= 25, "{decreasing} decreasing steps");
        let lo = r.density.rho.iter().cloned().fold(1.0, f64::min);
        assert!(lo >= s.rho_min * (1.0 - 1e-12), "min density {lo}");
        assert!(r.density.rho.iter().all(|&v| v <= 1.0));
    }

    #[test]
    fn mirrored_case_gives_mirrored_design() {
        let g = StructuredGrid::new(16, 16, 1.0).unwrap();
        let s = ToSettings { iterations: 15, ..ToSettings::default() };
        let case = ToCase::new(0.35, 0.3, 1.0, 0).unwrap();
        let a = run_topology_optimization(&case, &g, &unit_props(), &s).unwrap();
        let b = run_topology_optimization(&case.mirrored(), &g, &unit_props(), &s).unwrap();
        let m = a.density.mirrored();
        let diff = m.rho.iter().zip(&b.density.rho).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-6, "max diff {diff}");
    }

    #[test]
    fn binarize_rules() {
        let f = DensityField::uniform(3, 3, 0.49).unwrap();
        assert!(binarize(&f, 0.5).rho.iter().all(|&v| v == 0.0));
        let f = DensityField::uniform(2, 1, 0.5).unwrap();
        assert!(binarize(&f, 0.5).rho.iter().all(|&v| v == 1.0));
        let f = DensityField::new(4, 1, alloc::vec![0.1, 0.7, 0.5, 0.3]).unwrap();
        let once = binarize(&f, 0.5);
        assert!(once.binarized);
        assert_eq!(binarize(&once, 0.5), once);
    }
}
