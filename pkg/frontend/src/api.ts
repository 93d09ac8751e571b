import type {
  Assignment,
  ProgressReport,
  RatingAck,
  RatingSubmission,
} from "./types";

/** Non-2xx response, or status 0 when the service could not be reached. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`request failed (${status}): ${detail}`);
  }
}

export interface RatingApi {
  fetchAssignment(annotator: string): Promise<Assignment>;
  submitRating(body: RatingSubmission): Promise<RatingAck>;
  fetchProgress(): Promise<ProgressReport>;
}

async function readDetail(res: Response): Promise<string> {
  const text = await res.text();
  try {
    const body = JSON.parse(text);
    if (typeof body.detail === "string") return body.detail;
    return JSON.stringify(body.detail ?? body);
  } catch {
    return text || res.statusText;
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let res: Response;
  try {
    res = await fetch(url, init);
  } catch {
    throw new ApiError(0, "service unreachable");
  }
  if (!res.ok) {
    throw new ApiError(res.status, await readDetail(res));
  }
  return (await res.json()) as T;
}

/** Typed client for the four service endpoints. `base` is empty in the
 * browser (same origin or dev proxy) and an absolute URL in node tests. */
export function createApi(base = ""): RatingApi {
  return {
    fetchAssignment: (annotator) =>
      request<Assignment>(
        `${base}/api/assignment?annotator=${encodeURIComponent(annotator)}`,
      ),
    submitRating: (body) =>
      request<RatingAck>(`${base}/api/rating`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      }),
    fetchProgress: () => request<ProgressReport>(`${base}/api/progress`),
  };
}
