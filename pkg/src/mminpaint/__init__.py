"""Camera and lidar object inpainting in driving scenes."""
