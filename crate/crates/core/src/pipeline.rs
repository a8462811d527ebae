//! End-to-end workflows: caption-conditioned generation, synthetic-caption
//! augmentation, image-to-image transfer, and the multi-vs-single evaluation.
