"""Event-camera puck tracking."""
