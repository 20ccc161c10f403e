"""HTTP service wrapping the core search engine."""
