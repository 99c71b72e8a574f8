//! Retrieval-augmented weather rating: chunk annual reports, embed and
//! index them, retrieve context for a period and ask a provider for a 1–5
//! severity score.

mod index;
mod provider;
mod rating;

pub use index::{build_index, chunk, retrieve, DocumentChunk, Embedder, HashedTrigramEmbedder, Retrieved, RetrievalIndex};
pub use provider::{parse_score, MockProvider, Provider, SeverityRule};
pub use rating::{
    prompt_hash, ratings_to_feature, render_prompt, score_weather, CacheKey, MemoryCache, Period, RatingCache,
    ScoringConfig, WeatherRating, PROMPT_TEMPLATE, PROMPT_VERSION,
};
