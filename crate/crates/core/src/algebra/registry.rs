use super::Algebra;
use crate::tensor::Tensor;

/// Names accepted by [`builtin`].
///
/// `real` and `complex` are the two classical examples; `quaternion`,
/// `split-complex` (`e_1² = +e_0`) and `dual` (`e_1² = 0`) are the other
/// standard low-dimensional unital algebras.
pub const BUILTIN_NAMES: [&str; 5] = ["real", "complex", "quaternion", "split-complex", "dual"];

fn table(dim: usize, entries: &[(usize, usize, usize, f64)]) -> Tensor {
    let mut t = Tensor::zeros(&[dim, dim, dim]);
    for &(i, j, k, c) in entries {
        t.set(&[i, j, k], c);
    }
    t
}

/// Unit row and column for `e_0`, plus the given products of non-unit
/// basis elements.
fn unital(dim: usize, rest: &[(usize, usize, usize, f64)]) -> Tensor {
    let mut entries: Vec<_> = (0..dim).map(|j| (0, j, j, 1.0)).collect();
    entries.extend((1..dim).map(|i| (i, 0, i, 1.0)));
    entries.extend_from_slice(rest);
    table(dim, &entries)
}

/// Looks up a built-in algebra by name.
pub fn builtin(name: &str) -> Option<Algebra> {
    let (dim, t) = match name {
        "real" => (1, unital(1, &[])),
        "complex" => (2, unital(2, &[(1, 1, 0, -1.0)])),
        "split-complex" => (2, unital(2, &[(1, 1, 0, 1.0)])),
        "dual" => (2, unital(2, &[])),
        "quaternion" => (
            4,
            unital(
                4,
                &[
                    (1, 1, 0, -1.0),
                    (2, 2, 0, -1.0),
                    (3, 3, 0, -1.0),
                    (1, 2, 3, 1.0),
                    (2, 1, 3, -1.0),
                    (2, 3, 1, 1.0),
                    (3, 2, 1, -1.0),
                    (3, 1, 2, 1.0),
                    (1, 3, 2, -1.0),
                ],
            ),
        ),
        _ => return None,
    };
    Some(Algebra::from_table(name, dim, t).expect("built-in tables are well formed"))
}
