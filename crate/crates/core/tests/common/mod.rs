use fracwave::lattice::{AxisBox, Grid, GridParams, RegionMask, ScalarField};

/// 64 points on [-2, 2), 64 steps up to T = 1; interior [-0.5, 0.5] with
/// control window on the left and measurement window on the right.
pub fn small() -> (Grid, RegionMask) {
    let grid = Grid::new(GridParams {
        dim: 1,
        points: 64,
        box_length: 4.0,
        order: 0.75,
        dt: 1.0 / 64.0,
        steps: 64,
    })
    .unwrap();
    let mask = RegionMask::from_boxes(
        &grid,
        &[AxisBox::interval(-0.5, 0.5)],
        &[AxisBox::interval(-1.25, -0.5625)],
        &[AxisBox::interval(0.5625, 1.25)],
    )
    .unwrap();
    (grid, mask)
}

pub fn bump(grid: &Grid, mask: &RegionMask, center: f64, width: f64, amplitude: f64) -> ScalarField {
    mask.project_omega(&ScalarField::from_fn(grid, |x| {
        let r = (x[0] - center) / width;
        if r.abs() < 1.0 {
            amplitude * (1.0 - r * r).powi(3)
        } else {
            0.0
        }
    }))
}
