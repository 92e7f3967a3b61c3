pub mod fd_oracle;
pub mod gradcheck;
