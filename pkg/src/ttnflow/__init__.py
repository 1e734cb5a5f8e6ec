"""Time integration of tree tensor networks by recursive projector splitting."""
