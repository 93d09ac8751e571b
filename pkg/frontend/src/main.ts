import { createApi } from "./api";
import { FramePlayer } from "./player";
import { RatingSession } from "./session";
import type { Assignment } from "./types";
import "./style.css";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const session = new RatingSession(createApi(), {
  get: (key) => window.localStorage.getItem(key),
  set: (key, value) => window.localStorage.setItem(key, value),
});

const frameImg = el<HTMLImageElement>("frame");
const slider = el<HTMLInputElement>("score");
const submitBtn = el<HTMLButtonElement>("submit");

let player: FramePlayer | null = null;
let shownVideo: string | null = null;

function showAssignment(a: Assignment): void {
  if (shownVideo === a.video_id) return;
  shownVideo = a.video_id;
  player?.stop();
  el("prompt-text").textContent = a.prompt_text;
  // preload the stills once so the loop does not flicker on first pass
  const cache = a.frame_urls.map((url) => {
    const img = new Image();
    img.src = url;
    return img;
  });
  player = new FramePlayer(
    cache.length,
    a.fps,
    (i) => {
      frameImg.src = cache[i].src;
    },
    () => session.markLoopComplete(),
  );
  player.start();
}

function render(): void {
  const phase = session.phase;
  el("enter-id").hidden = phase !== "enter-id";
  el("rating").hidden = phase !== "rating" && phase !== "submitting";
  el("done").hidden = phase !== "done";
  el("offline-banner").hidden = phase !== "offline";
  el("loading").hidden = phase !== "loading";

  if ((phase === "rating" || phase === "submitting") && session.assignment) {
    showAssignment(session.assignment);
  }
  if (phase === "done" || phase === "offline") {
    player?.stop();
    shownVideo = null;
  }

  slider.value = String(session.slider);
  el("score-value").textContent = String(session.slider);
  el("loop-hint").hidden = session.loopSeen;
  submitBtn.disabled = !session.canSubmit;
  submitBtn.textContent = phase === "submitting" ? "Submitting..." : "Submit rating";

  const error = el("inline-error");
  error.hidden = session.inlineError === null;
  error.textContent = session.inlineError ?? "";

  const progress = session.progress;
  el("progress-line").textContent = progress
    ? `${progress.rated} of ${progress.total} videos fully rated`
    : "";
}

el<HTMLFormElement>("annotator-form").addEventListener("submit", (ev) => {
  ev.preventDefault();
  void session.setAnnotator(el<HTMLInputElement>("annotator-input").value);
});

slider.addEventListener("input", () => {
  session.setSlider(Number(slider.value));
});

submitBtn.addEventListener("click", () => {
  void session.submit();
});

el("retry").addEventListener("click", () => {
  void session.retry();
});

session.subscribe(render);
render();
void session.start();
