"""Planning baselines: MCTS, Monte-Carlo search, nested retries."""
