import { ApiError, RatingApi } from "./api";
import type { Assignment, ProgressReport } from "./types";

export type Phase =
  | "enter-id"
  | "loading"
  | "rating"
  | "submitting"
  | "done"
  | "offline";

export interface KeyValueStore {
  get(key: string): string | null;
  set(key: string, value: string): void;
}

const STORAGE_KEY = "rating-ui.annotator-id";

/**
 * View model for a rating session. Framework free on purpose: the DOM
 * layer subscribes and re-renders, tests drive it directly.
 *
 * Rules it enforces regardless of what the DOM does:
 *   - the slider value never leaves [0, 100]
 *   - nothing is submitted without a current assignment
 *   - submit stays locked until one full playback loop was seen
 *   - at most one submission is in flight at a time
 *
 * The server stays the source of truth for what has been rated; on any
 * ambiguity (409, reload, lost ack) the session just refetches.
 */
export class RatingSession {
  private _phase: Phase = "enter-id";
  private _annotator: string | null;
  private _assignment: Assignment | null = null;
  private _slider = 50;
  private _loopSeen = false;
  private _error: string | null = null;
  private _progress: ProgressReport | null = null;
  private _posting = false;
  private listeners: Array<() => void> = [];

  constructor(
    private readonly api: RatingApi,
    private readonly storage: KeyValueStore,
  ) {
    this._annotator = storage.get(STORAGE_KEY);
  }

  get phase(): Phase {
    return this._phase;
  }

  get annotator(): string | null {
    return this._annotator;
  }

  get assignment(): Assignment | null {
    return this._assignment;
  }

  get slider(): number {
    return this._slider;
  }

  get loopSeen(): boolean {
    return this._loopSeen;
  }

  get inlineError(): string | null {
    return this._error;
  }

  get progress(): ProgressReport | null {
    return this._progress;
  }

  get canSubmit(): boolean {
    return (
      this._phase === "rating" &&
      this._assignment !== null &&
      this._loopSeen &&
      !this._posting
    );
  }

  subscribe(fn: () => void): void {
    this.listeners.push(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  /** Resume with the locally stored annotator id, or ask for one. */
  async start(): Promise<void> {
    if (this._annotator) {
      await this.load();
    } else {
      this._phase = "enter-id";
      this.notify();
    }
  }

  async setAnnotator(raw: string): Promise<void> {
    const id = raw.trim();
    if (!id) return;
    this._annotator = id;
    this.storage.set(STORAGE_KEY, id);
    await this.load();
  }

  setSlider(value: number): void {
    if (!Number.isFinite(value)) return; // ignore NaN/Inf, keep last good value
    this._slider = Math.min(100, Math.max(0, value));
    this.notify();
  }

  /** Called by the player once every frame of the clip has been shown. */
  markLoopComplete(): void {
    if (this._phase !== "rating") return;
    this._loopSeen = true;
    this.notify();
  }

  async retry(): Promise<void> {
    if (this._annotator && this._phase === "offline") await this.load();
  }

  async submit(): Promise<void> {
    if (!this.canSubmit || !this._assignment || !this._annotator) return;
    this._posting = true;
    this._phase = "submitting";
    this._error = null;
    this.notify();
    try {
      await this.api.submitRating({
        annotator_id: this._annotator,
        video_id: this._assignment.video_id,
        raw_score: this._slider,
      });
      this._posting = false;
      await this.load();
    } catch (err) {
      this._posting = false;
      if (err instanceof ApiError && err.status === 409) {
        // duplicate means the server already has it; silently move on
        await this.load();
      } else if (err instanceof ApiError && err.status === 422) {
        this._phase = "rating";
        this._error = err.detail;
        this.notify();
      } else {
        this._phase = "offline";
        this.notify();
      }
    }
  }

  private async load(): Promise<void> {
    this._phase = "loading";
    this.notify();
    if (!this._annotator) return;
    try {
      this._progress = await this.api.fetchProgress();
    } catch {
      // progress is cosmetic; keep whatever we had
    }
    try {
      const next = await this.api.fetchAssignment(this._annotator);
      this._assignment = next;
      this._slider = 50;
      this._loopSeen = false;
      this._error = null;
      this._phase = "rating";
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this._assignment = null;
        this._phase = "done";
      } else {
        this._phase = "offline";
      }
    }
    this.notify();
  }
}
