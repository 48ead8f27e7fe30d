//! Desk-scale artistic glyph generation: dataset synthesis, conditioned
//! latent diffusion, one-shot reference-driven sampling and evaluation.

pub mod glyph_synth;
pub mod imageio;
