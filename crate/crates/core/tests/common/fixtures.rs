//! Hand-counted metric fixtures: 2×2×2 or 3×2×2 label grids with their confusion tallies.
#![allow(dead_code)]

pub struct Fixture {
    pub dims: [usize; 3],
    pub classes: u16,
    pub pred: Vec<u16>,
    pub gt: Vec<u16>,
    pub inter: u64,
    pub union: u64,
    /// (tp, fp, fn) for classes 1..
    pub tallies: Vec<(u64, u64, u64)>,
}

fn fx(classes: u16, pred: &[u16], gt: &[u16], inter: u64, union: u64, tallies: &[(u64, u64, u64)]) -> Fixture {
    let dims = if pred.len() == 8 { [2, 2, 2] } else { [3, 2, 2] };
    Fixture {
        dims,
        classes,
        pred: pred.to_vec(),
        gt: gt.to_vec(),
        inter,
        union,
        tallies: tallies.to_vec(),
    }
}

pub fn fixtures() -> Vec<Fixture> {
    vec![
        fx(3, &[0, 1, 2, 0, 1, 1, 0, 2], &[0, 1, 2, 0, 1, 1, 0, 2], 5, 5, &[(3, 0, 0), (2, 0, 0)]),
        fx(3, &[0; 8], &[1, 0, 0, 2, 0, 0, 0, 0], 0, 2, &[(0, 0, 1), (0, 0, 1)]),
        fx(3, &[1, 1, 1, 1, 0, 0, 0, 0], &[1, 2, 0, 0, 1, 0, 0, 0], 2, 5, &[(1, 3, 1), (0, 0, 1)]),
        fx(3, &[0; 8], &[0; 8], 0, 0, &[(0, 0, 0), (0, 0, 0)]),
        fx(3, &[2; 8], &[2, 2, 2, 2, 1, 1, 1, 1], 8, 8, &[(0, 0, 4), (4, 4, 0)]),
        fx(3, &[0, 0, 0, 0, 1, 1, 1, 1], &[1, 1, 1, 1, 0, 0, 0, 0], 0, 8, &[(0, 4, 4), (0, 0, 0)]),
        fx(3, &[1, 2, 0, 0, 0, 0, 0, 1], &[2, 1, 0, 0, 0, 0, 0, 1], 3, 3, &[(1, 1, 1), (0, 1, 1)]),
        fx(4, &[3, 3, 0, 1, 0, 0, 2, 0], &[3, 0, 3, 1, 2, 0, 2, 0], 3, 6, &[(1, 0, 0), (1, 0, 1), (1, 1, 1)]),
        fx(3, &[1, 0, 0, 0, 0, 0, 0, 0], &[0; 8], 0, 1, &[(0, 1, 0), (0, 0, 0)]),
        fx(3, &[1, 1, 2, 2, 0, 0, 1, 2], &[1, 2, 2, 1, 1, 2, 0, 0], 4, 8, &[(1, 2, 2), (1, 2, 2)]),
        fx(5, &[1, 3, 3, 0, 0, 0, 0, 0], &[1, 3, 0, 0, 0, 0, 0, 2], 2, 4, &[(1, 0, 0), (0, 0, 1), (1, 1, 0), (0, 0, 0)]),
        fx(
            3,
            &[0, 1, 1, 2, 2, 2, 0, 0, 1, 0, 2, 1],
            &[1, 1, 0, 2, 1, 2, 0, 2, 1, 0, 0, 1],
            6,
            10,
            &[(3, 1, 2), (2, 2, 1)],
        ),
    ]
}
