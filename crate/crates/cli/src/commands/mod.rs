pub mod audit;
pub mod gen_data;
pub mod pretrain;
pub mod report;
pub mod train;
