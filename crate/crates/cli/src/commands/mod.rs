pub mod gen_labels;
pub mod gradcheck;
pub mod make_noise;
pub mod report;
pub mod train;
