"""System prompts for the remote resolver, one text asset per task kind."""
