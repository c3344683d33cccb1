pub mod bcca;
pub mod bench;
pub mod cli;
pub mod config;
pub mod datapipe;
pub mod editor;
pub mod encoders;
pub mod image;
pub mod instructions;
pub mod mllm;
pub mod numkernel;
pub mod saca;
