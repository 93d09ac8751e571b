/**
 * Cycles still-frame indices at the clip's native rate. The manifest fps
 * is authoritative; `onFirstLoop` fires exactly once, after every frame
 * has had one full display slot, and is what unlocks submission upstream.
 */
export class FramePlayer {
  private index = 0;
  private looped = false;
  private timer: ReturnType<typeof setInterval> | null = null;
  private readonly intervalMs: number;

  constructor(
    private readonly frameCount: number,
    fps: number,
    private readonly onFrame: (index: number) => void,
    private readonly onFirstLoop: () => void,
  ) {
    this.intervalMs = Math.max(1000 / Math.max(fps, 0.001), 10);
  }

  start(): void {
    if (this.timer !== null || this.frameCount === 0) return;
    this.onFrame(this.index);
    this.timer = setInterval(() => this.advance(), this.intervalMs);
  }

  /** One tick; exposed so tests can drive playback without timers. */
  advance(): void {
    this.index = (this.index + 1) % this.frameCount;
    if (this.index === 0 && !this.looped) {
      this.looped = true;
      this.onFirstLoop();
    }
    this.onFrame(this.index);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
