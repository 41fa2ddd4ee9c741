pub mod gen_data;
pub mod restore;
pub mod slice;
pub mod sweep;
pub mod train;
pub mod validate;
