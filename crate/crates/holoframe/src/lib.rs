//! Numerics for Lie-algebra-valued (0,1)-forms on discretised domains in C and C^2:
//! the integrability obstruction, gauge calculus identities, Hölder norms, ∂̄ right
//! inverses, and Newton solvers for the frame equation `l̄(exp u) = λ`.

pub mod cli;
pub mod dbar_solve;
pub mod frame_solver;
pub mod grid;
pub mod holder;
pub mod identities;
pub mod lie;
pub mod linalg;
pub mod oracle;
pub mod poly;

pub use num_complex::Complex64 as C64;
